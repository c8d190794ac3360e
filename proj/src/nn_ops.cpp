#include "pfd/nn_ops.hpp"

#include <cmath>

namespace pfd::nn {

void init_uniform(Mat& m, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

bool all_finite(const Mat& m) { return m.allFinite(); }

std::uint64_t& mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

double bce(double y, double p) {
  const double q = clip_prob(p);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

double bce_grad_prob(double y, double p) {
  if (p < kProbEps || p > 1.0 - kProbEps) return 0.0;
  return -y / p + (1.0 - y) / (1.0 - p);
}

double bce_grad_logit(double y, double z) {
  const double p = sigmoid(z);
  if (p < kProbEps || p > 1.0 - kProbEps) return 0.0;
  return p - y;
}

double project_sigmoid(const Mat& w, const Mat& b, const Vec& h) {
  mac_counter() += static_cast<std::uint64_t>(h.size());
  return sigmoid(w.row(0).dot(h) + b(0, 0));
}

}  // namespace pfd::nn
