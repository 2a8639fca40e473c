#pragma once

#include "mtgan/numerics.hpp"

namespace mtgan {

// Batched LSTM cell shared by the generator and the BiRNN discriminator.
//
// Weights W have shape (d_h + d_in) x 4 d_h and act on the row-wise
// concatenation [h_{t-1}, x_t]; bias b is 1 x 4 d_h. Gate column blocks are
// ordered input, forget, output, candidate:
//   i = sigmoid(.), f = sigmoid(.), o = sigmoid(.), g = tanh(.)
//   c_t = f * c_{t-1} + i * g
//   h_t = o * tanh(c_t)

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(Eigen::Index batch, Eigen::Index hidden) {
    return {Tensor::Zero(batch, hidden), Tensor::Zero(batch, hidden)};
  }
};

struct LstmCache {
  Tensor z;  // [h_prev, x]
  Tensor i, f, o, g;
  Tensor c_prev;
  Tensor tanh_c;
};

// Advances `state` in place. When `cache` is non-null it receives what the
// backward pass needs.
void lstm_forward(const Tensor& weights, const Tensor& bias, const Tensor& x, LstmState& state,
                  LstmCache* cache = nullptr);

// Gradients flowing into h_t and c_t are `dh` and `dc`. On return they hold
// the gradients w.r.t. h_{t-1} and c_{t-1}; `dx` receives the gradient of the
// step input; dW and db are accumulated.
void lstm_backward(const Tensor& weights, const LstmCache& cache, Tensor& dh, Tensor& dc, Tensor* dx,
                   Tensor& dweights, Tensor& dbias);

}  // namespace mtgan
