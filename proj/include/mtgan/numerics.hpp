#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtgan/errors.hpp"
#include "mtgan/rng.hpp"

namespace mtgan {

template <typename Scalar>
using TensorT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Tensor = TensorT<double>;
using RowVector = RowVectorT<double>;
using Vector = VectorT<double>;
using TokenMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

template <typename DerivedA, typename DerivedB>
TensorT<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.rows(), a.cols()) + " by " +
                         shape_string(b.rows(), b.cols()));
  }
  return a * b;
}

// Row-wise softmax with max subtraction.
template <typename Derived>
TensorT<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  TensorT<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Derived>
TensorT<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  TensorT<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    const Scalar lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = (logits.row(r).array() - lse).matrix();
  }
  return out;
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& t) {
  return t.allFinite();
}

void ensure_finite(const Tensor& t, std::string_view what);

// Named parameter with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Insertion-ordered parameter collection. Iteration order is stable and is
// the order used for optimizer state and checkpoints.
class ParamStore {
 public:
  Param& add(std::string name, Tensor value);

  Param& operator[](std::string_view name);
  const Param& operator[](std::string_view name) const;
  bool contains(std::string_view name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;

  void zero_grad();
  double grad_norm() const;
  // Scales gradients so their global L2 norm is at most max_norm; returns the
  // norm before clipping.
  double clip_grad_norm(double max_norm);
  // Concatenation of every gradient, in store order.
  Vector flat_grad() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Adaptive-moment optimizer state.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled decay: value -= learning_rate * weight_decay * value per step.
  double weight_decay = 0.0;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState with_learning_rate(double lr) {
    AdamState s;
    s.learning_rate = lr;
    return s;
  }
};

// One bias-corrected Adam update of every parameter; gradients are zeroed
// afterward. Throws NumericError naming the first parameter whose gradient is
// not finite, leaving parameters untouched.
void adam_step(ParamStore& params, AdamState& state);

// beta <- (1 - alpha) * theta + alpha * beta, elementwise over every parameter.
void soft_update(const ParamStore& theta, ParamStore& beta, double alpha);

// Largest absolute elementwise difference across all parameters.
double max_abs_difference(const ParamStore& a, const ParamStore& b);

// Initializers.
Tensor uniform_tensor(Eigen::Index rows, Eigen::Index cols, double bound, RngStream& rng);
// Normal with standard deviation 1/sqrt(fan_in).
Tensor fan_in_normal_tensor(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, RngStream& rng);

}  // namespace mtgan
