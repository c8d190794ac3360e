#pragma once

#include "pfd/tensor.hpp"

#include <cmath>

namespace pfd::nn {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline constexpr double kProbEps = 1e-7;

inline double clip_prob(double p) {
  return p < kProbEps ? kProbEps : (p > 1.0 - kProbEps ? 1.0 - kProbEps : p);
}

// Binary cross-entropy -(y ln p + (1-y) ln(1-p)) with p clipped to
// [1e-7, 1-1e-7].
double bce(double y, double p);

// d bce / d p; zero where the clip is active.
double bce_grad_prob(double y, double p);

// d bce(y, sigmoid(z)) / d z, consistent with the clip.
double bce_grad_logit(double y, double z);

// y = sigmoid(w . h + b) for a 1-output projection; w is [1 x H], b [1 x 1].
double project_sigmoid(const Mat& w, const Mat& b, const Vec& h);

}  // namespace pfd::nn
