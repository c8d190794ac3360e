#include "pfd/grad_check.hpp"

#include "pfd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pfd::nn {

double relative_error(double analytic, double numeric, double denom_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), denom_floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<double()>& f,
                           std::span<Mat* const> params,
                           std::span<const Mat* const> analytic,
                           const GradCheckOptions& options) {
  if (params.size() != analytic.size()) {
    throw DimensionError("grad_check: parameter/gradient count mismatch");
  }
  GradCheckResult result;
  Rng rng(options.seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat& p = *params[k];
    const Mat& g = *analytic[k];
    if (p.rows() != g.rows() || p.cols() != g.cols()) {
      throw DimensionError("grad_check: gradient shape mismatch");
    }
    std::vector<Eigen::Index> coords(p.size());
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
    }
    for (Eigen::Index idx : coords) {
      double& w = p.data()[idx];
      const double saved = w;
      w = saved + options.step;
      const double up = f();
      w = saved - options.step;
      const double down = f();
      w = saved;
      ++result.checked;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        result.finite = false;
        result.max_rel_error = std::numeric_limits<double>::infinity();
        result.worst_tensor = k;
        result.worst_index = static_cast<std::size_t>(idx);
        return result;
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = g.data()[idx];
      const double err = relative_error(a, numeric, options.denom_floor);
      if (err > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        if (err >= result.max_rel_error) {
          result.worst_tensor = k;
          result.worst_index = static_cast<std::size_t>(idx);
          result.worst_analytic = a;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace pfd::nn
