#include "pfd/gating.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace pfd::gating {

GateParams GateParams::zeros(int input_width) {
  return GateParams{Mat::Zero(2, input_width), Mat::Zero(1, 2)};
}

GateParams GateParams::random(int input_width, Rng& rng) {
  GateParams p = zeros(input_width);
  nn::init_uniform(p.weight, input_width, rng);
  return p;
}

Pair gate_logits(const Vec& u_lf, const Vec& h_lf_prev, const Vec& h_hf_prev,
                 const GateParams& params) {
  const Eigen::Index a = u_lf.size(), b = h_lf_prev.size(), c = h_hf_prev.size();
  if (a + b + c != params.weight.cols()) {
    throw DimensionError(fmt::format("gate input width {}+{}+{} != {}", a, b, c,
                                     params.weight.cols()));
  }
  nn::mac_counter() += 2ull * static_cast<std::uint64_t>(a + b + c);
  Pair out{};
  for (int k = 0; k < 2; ++k) {
    const auto row = params.weight.row(k);
    out[k] = row.segment(0, a).dot(u_lf) + row.segment(a, b).dot(h_lf_prev) +
             row.segment(a + b, c).dot(h_hf_prev) + params.bias(0, k);
  }
  return out;
}

GateInputGrads gate_logits_backward(const Vec& u_lf, const Vec& h_lf_prev,
                                    const Vec& h_hf_prev, const GateParams& params,
                                    const Pair& d_logits, GateParams& grads) {
  const Eigen::Index a = u_lf.size(), b = h_lf_prev.size(), c = h_hf_prev.size();
  GateInputGrads out{Vec::Zero(a), Vec::Zero(b), Vec::Zero(c)};
  for (int k = 0; k < 2; ++k) {
    const double d = d_logits[k];
    auto grow = grads.weight.row(k);
    grow.segment(0, a) += d * u_lf.transpose();
    grow.segment(a, b) += d * h_lf_prev.transpose();
    grow.segment(a + b, c) += d * h_hf_prev.transpose();
    grads.bias(0, k) += d;
    const auto row = params.weight.row(k);
    out.d_u_lf += d * row.segment(0, a).transpose();
    out.d_h_lf_prev += d * row.segment(a, b).transpose();
    out.d_h_hf_prev += d * row.segment(a + b, c).transpose();
  }
  return out;
}

Pair sample_gumbel(Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Pair n{};
  for (double& v : n) {
    const double u = std::clamp(uni(rng), 1e-10, 1.0 - 1e-10);
    v = -std::log(-std::log(u));
  }
  return n;
}

Pair gumbel_softmax(const Pair& logits, double mu, const Pair& noise) {
  if (!(mu > 0.0)) throw ParameterError(fmt::format("temperature must be > 0, got {}", mu));
  const double a = (logits[0] + noise[0]) / mu;
  const double b = (logits[1] + noise[1]) / mu;
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  const double s = ea + eb;
  return {ea / s, eb / s};
}

Pair gumbel_softmax(const Pair& logits, double mu, Rng& rng) {
  return gumbel_softmax(logits, mu, sample_gumbel(rng));
}

Pair gumbel_softmax_backward(const Pair& soft, double mu, const Pair& d_soft) {
  const double dot = soft[0] * d_soft[0] + soft[1] * d_soft[1];
  return {soft[0] * (d_soft[0] - dot) / mu, soft[1] * (d_soft[1] - dot) / mu};
}

int hard_gate(const Pair& logits) { return logits[0] > logits[1] ? kHfOn : kHfOff; }

}  // namespace pfd::gating
