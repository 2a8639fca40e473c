#include "mtgan/numerics.hpp"

#include <sstream>

namespace mtgan {

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  std::ostringstream os;
  os << "(" << rows << " x " << cols << ")";
  return os.str();
}

void ensure_finite(const Tensor& t, std::string_view what) {
  if (!t.allFinite()) throw NumericError("non-finite values in " + std::string(what));
}

Param& ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ValidationError("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  Tensor grad = Tensor::Zero(value.rows(), value.cols());
  params_.push_back(Param{std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

Param& ParamStore::operator[](std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw IndexError("unknown parameter: " + std::string(name));
  return params_[it->second];
}

const Param& ParamStore::operator[](std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw IndexError("unknown parameter: " + std::string(name));
  return params_[it->second];
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / norm;
    for (auto& p : params_) p.grad *= scale;
  }
  return norm;
}

Vector ParamStore::flat_grad() const {
  Vector out(static_cast<Eigen::Index>(total_elements()));
  Eigen::Index offset = 0;
  for (const auto& p : params_) {
    out.segment(offset, p.grad.size()) = p.grad.reshaped<Eigen::RowMajor>();
    offset += p.grad.size();
  }
  return out;
}

void adam_step(ParamStore& params, AdamState& state) {
  for (const auto& p : params) {
    if (!p.grad.allFinite()) throw NumericError("poisoned gradient in parameter '" + p.name + "'");
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
      state.second_moment.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t i = 0;
  for (auto& p : params) {
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw DimensionError("adam: moment shape mismatch for '" + p.name + "'");
    }
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    if (state.weight_decay > 0.0) p.value *= 1.0 - state.learning_rate * state.weight_decay;
    p.value.array() -= state.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
    p.grad.setZero();
    ++i;
  }
}

void soft_update(const ParamStore& theta, ParamStore& beta, double alpha) {
  if (theta.size() != beta.size()) throw DimensionError("soft_update: parameter count mismatch");
  auto it = beta.begin();
  for (const auto& p : theta) {
    Param& b = *it++;
    if (b.name != p.name || b.value.rows() != p.value.rows() || b.value.cols() != p.value.cols()) {
      throw DimensionError("soft_update: mismatch at '" + p.name + "'");
    }
    b.value = (1.0 - alpha) * p.value + alpha * b.value;
  }
}

double max_abs_difference(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_difference: parameter count mismatch");
  double out = 0.0;
  auto it = b.begin();
  for (const auto& p : a) {
    const Param& q = *it++;
    if (p.value.size() > 0) out = std::max(out, (p.value - q.value).cwiseAbs().maxCoeff());
  }
  return out;
}

Tensor uniform_tensor(Eigen::Index rows, Eigen::Index cols, double bound, RngStream& rng) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor fan_in_normal_tensor(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, RngStream& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = sd * rng.normal();
  return t;
}

}  // namespace mtgan
