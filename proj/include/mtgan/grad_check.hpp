#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "mtgan/numerics.hpp"

namespace mtgan {

// A loss over a parameter store. When `accumulate_grad` is true the callee
// must add dLoss/dParam into each Param::grad.
using LossFunction = std::function<double(ParamStore&, bool accumulate_grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

// Compares analytic gradients against central differences. When the store
// holds more than `max_coordinates` elements a seeded random subset is
// checked. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult finite_diff_check(const LossFunction& loss, ParamStore& params, double eps = 1e-5,
                                  std::size_t max_coordinates = 4000, std::uint64_t seed = 0);

}  // namespace mtgan
