#pragma once

#include "pfd/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pfd::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool finite = true;

  bool passed(double tol) const { return finite && max_rel_error <= tol; }
};

struct GradCheckOptions {
  double step = 1e-5;
  // |a - n| / max(|a|, |n|, denom_floor)
  double denom_floor = 1e-6;
  // 0 checks every coordinate; otherwise a seeded random subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

// Compares analytic gradients against central differences
// (f(w+h) - f(w-h)) / 2h, perturbing the tensors in place (each coordinate
// is restored after use). A non-finite f is reported as a failure.
GradCheckResult grad_check(const std::function<double()>& f,
                           std::span<Mat* const> params,
                           std::span<const Mat* const> analytic,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double denom_floor);

}  // namespace pfd::nn
