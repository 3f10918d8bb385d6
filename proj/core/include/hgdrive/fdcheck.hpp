#pragma once

#include <functional>
#include <vector>

#include "hgdrive/tensor.hpp"

namespace hgd {

struct FdResult {
  double max_rel_err = 0.0;  // max over checked coordinates
  int checked = 0;
  // Coordinates where the two one-sided differences disagree (the function is
  // locally non-smooth there, e.g. a ReLU sitting at zero); these are skipped
  // rather than scored.
  std::vector<int> non_differentiable;
};

// Central-difference gradient check of a scalar-valued map at `point`.
// The analytic gradient comes from the reverse pass; the numeric reference
// uses only forward evaluations with coordinate-wise +/- eps perturbations,
// so the two paths share no derivative code. Relative error per coordinate is
// |analytic - numeric| / max(1, |numeric|).
FdResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double eps = 1e-5);

}  // namespace hgd
