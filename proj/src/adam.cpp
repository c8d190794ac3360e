#include "pfd/adam.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pfd::nn {

AdamState AdamState::like(std::span<Mat* const> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const Mat* p : params) {
    s.m.push_back(Mat::Zero(p->rows(), p->cols()));
    s.v.push_back(Mat::Zero(p->rows(), p->cols()));
  }
  return s;
}

void adam_step(AdamState& state, std::span<Mat* const> params,
               std::span<const Mat* const> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError(fmt::format("adam: {} params, {} grads, {} moment buffers",
                                     params.size(), grads.size(), state.m.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->rows() != grads[k]->rows() || params[k]->cols() != grads[k]->cols() ||
        params[k]->rows() != state.m[k].rows() || params[k]->cols() != state.m[k].cols()) {
      throw DimensionError(fmt::format("adam: shape mismatch at parameter {}", k));
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->array();
    auto g = grads[k]->array();
    auto m = state.m[k].array();
    auto v = state.v[k].array();
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    p -= c.lr * (m / bc1) / ((v / bc2).sqrt() + c.eps);
  }
}

}  // namespace pfd::nn
