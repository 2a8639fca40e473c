#include "mtgan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mtgan {
namespace {

double evaluate(const LossFunction& loss, ParamStore& params) {
  const double v = loss(params, false);
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const LossFunction& loss, ParamStore& params, double eps,
                                  std::size_t max_coordinates, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ValidationError("finite_diff_check: eps must be positive");

  params.zero_grad();
  const double base = loss(params, true);
  if (!std::isfinite(base)) throw NumericError("finite_diff_check: loss evaluated to a non-finite value");
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);
  params.zero_grad();

  // Flat coordinate list (parameter index, element index).
  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  std::size_t pi = 0;
  for (const auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) coords.emplace_back(pi, i);
    ++pi;
  }
  if (coords.size() > max_coordinates) {
    RngStream rng(seed, stream_id({tag(Purpose::kGradCheck)}));
    rng.shuffle(coords);
    coords.resize(max_coordinates);
  }

  std::vector<Param*> by_index;
  for (auto& p : params) by_index.push_back(&p);

  GradCheckResult result;
  for (const auto& [param_idx, elem] : coords) {
    Param& p = *by_index[param_idx];
    double& x = p.value.data()[elem];
    const double saved = x;
    x = saved + eps;
    const double plus = evaluate(loss, params);
    x = saved - eps;
    const double minus = evaluate(loss, params);
    x = saved;

    const double numeric = (plus - minus) / (2.0 * eps);
    const double a = analytic[param_idx].data()[elem];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++result.coordinates_checked;
    if (rel > result.max_relative_error || result.worst_index < 0) {
      result.max_relative_error = std::max(rel, result.max_relative_error);
      if (rel >= result.max_relative_error) {
        result.worst_parameter = p.name;
        result.worst_index = elem;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace mtgan
