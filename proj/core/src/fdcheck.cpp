#include "hgdrive/fdcheck.hpp"

#include <cmath>

namespace hgd {

FdResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double eps) {
  if (!point.defined()) throw ShapeError("finite_diff_check: undefined point");
  if (eps <= 0.0) throw ShapeError("finite_diff_check: eps must be positive");

  // Analytic gradient at the point.
  Tensor x = point.detach();
  x.mark_param();
  Tensor y = f(x);
  if (y.size() != 1) {
    throw ShapeError("finite_diff_check: f must return a scalar, got " + shape_str(y.shape()));
  }
  backward(y);
  std::vector<double> analytic = x.grad();

  double f0;
  {
    NoGradGuard ng;
    f0 = f(point).item();
  }

  FdResult res;
  std::vector<double> base = point.data();
  NoGradGuard ng;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> v = base;
    v[i] = base[i] + eps;
    double fp = f(Tensor::from(point.shape(), v)).item();
    v[i] = base[i] - eps;
    double fm = f(Tensor::from(point.shape(), v)).item();

    double dplus = (fp - f0) / eps;
    double dminus = (f0 - fm) / eps;
    // One-sided slopes that disagree mark a kink between x-eps and x+eps;
    // the central difference is meaningless there.
    if (std::abs(dplus - dminus) > std::max(1e-3, 1e-2 * (std::abs(dplus) + std::abs(dminus)))) {
      res.non_differentiable.push_back(static_cast<int>(i));
      continue;
    }
    double numeric = (fp - fm) / (2.0 * eps);
    double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (err > res.max_rel_err) res.max_rel_err = err;
    ++res.checked;
  }
  return res;
}

}  // namespace hgd
