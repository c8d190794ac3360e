#pragma once

#include "pfd/tensor.hpp"

#include <span>
#include <vector>

namespace pfd::nn {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;

  // Moment buffers shaped like the given parameters, zero-initialised.
  static AdamState like(std::span<Mat* const> params, AdamConfig config);
};

// One bias-corrected Adam update, elementwise and deterministic. Throws
// DimensionError if shapes differ from the state's buffers.
void adam_step(AdamState& state, std::span<Mat* const> params,
               std::span<const Mat* const> grads);

}  // namespace pfd::nn
