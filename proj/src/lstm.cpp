#include "mtgan/lstm.hpp"

namespace mtgan {

void lstm_forward(const Tensor& weights, const Tensor& bias, const Tensor& x, LstmState& state,
                  LstmCache* cache) {
  const Eigen::Index batch = x.rows();
  const Eigen::Index hidden = state.h.cols();
  if (state.h.rows() != batch || weights.rows() != hidden + x.cols() || weights.cols() != 4 * hidden) {
    throw DimensionError("lstm_forward: weights " + shape_string(weights.rows(), weights.cols()) +
                         " incompatible with input " + shape_string(x.rows(), x.cols()) + " and state " +
                         shape_string(state.h.rows(), state.h.cols()));
  }
  Tensor z(batch, hidden + x.cols());
  z.leftCols(hidden) = state.h;
  z.rightCols(x.cols()) = x;

  Tensor gates = z * weights;
  gates.rowwise() += bias.row(0);

  Tensor i = sigmoid(gates.middleCols(0, hidden).array()).matrix();
  Tensor f = sigmoid(gates.middleCols(hidden, hidden).array()).matrix();
  Tensor o = sigmoid(gates.middleCols(2 * hidden, hidden).array()).matrix();
  Tensor g = gates.middleCols(3 * hidden, hidden).array().tanh().matrix();

  Tensor c = (f.array() * state.c.array() + i.array() * g.array()).matrix();
  Tensor tanh_c = c.array().tanh().matrix();
  Tensor h = (o.array() * tanh_c.array()).matrix();

  if (cache) {
    cache->z = std::move(z);
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->o = std::move(o);
    cache->g = std::move(g);
    cache->c_prev = state.c;
    cache->tanh_c = tanh_c;
  }
  state.h = std::move(h);
  state.c = std::move(c);
}

void lstm_backward(const Tensor& weights, const LstmCache& cache, Tensor& dh, Tensor& dc, Tensor* dx,
                   Tensor& dweights, Tensor& dbias) {
  const Eigen::Index hidden = cache.i.cols();
  const Eigen::Index batch = cache.i.rows();

  const auto dc_total = (dc.array() + dh.array() * cache.o.array() * (1.0 - cache.tanh_c.array().square())).eval();

  Tensor dgates(batch, 4 * hidden);
  dgates.middleCols(0, hidden) = (dc_total * cache.g.array() * cache.i.array() * (1.0 - cache.i.array())).matrix();
  dgates.middleCols(hidden, hidden) =
      (dc_total * cache.c_prev.array() * cache.f.array() * (1.0 - cache.f.array())).matrix();
  dgates.middleCols(2 * hidden, hidden) =
      (dh.array() * cache.tanh_c.array() * cache.o.array() * (1.0 - cache.o.array())).matrix();
  dgates.middleCols(3 * hidden, hidden) = (dc_total * cache.i.array() * (1.0 - cache.g.array().square())).matrix();

  dweights.noalias() += cache.z.transpose() * dgates;
  dbias.row(0) += dgates.colwise().sum();

  Tensor dz = dgates * weights.transpose();
  dh = dz.leftCols(hidden);
  dc = (dc_total * cache.f.array()).matrix();
  if (dx) *dx = dz.rightCols(dz.cols() - hidden);
}

}  // namespace mtgan
