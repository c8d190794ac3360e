#pragma once

#include "pfd/tensor.hpp"

#include <array>

namespace pfd::gating {

using Pair = std::array<double, 2>;

// Component 0 means "run the fine stream", component 1 means "skip it".
inline constexpr int kHfOn = 0;
inline constexpr int kHfOff = 1;

// Affine map from [u_lf, h_lf_prev, h_hf_prev] to two logits.
struct GateParams {
  Mat weight;  // [2 x (d_lf + lf_hidden + hf_hidden)]
  Mat bias;    // [1 x 2]

  static GateParams zeros(int input_width);
  static GateParams random(int input_width, Rng& rng);
  int input_width() const { return static_cast<int>(weight.cols()); }
};

struct GateDecision {
  Pair logits{};
  Pair noise{};
  Pair soft{};
  int hard = kHfOff;
};

Pair gate_logits(const Vec& u_lf, const Vec& h_lf_prev, const Vec& h_hf_prev,
                 const GateParams& params);

struct GateInputGrads {
  Vec d_u_lf;
  Vec d_h_lf_prev;
  Vec d_h_hf_prev;
};

// Accumulates d logits into grads and returns the gradient w.r.t. each
// concatenated input block.
GateInputGrads gate_logits_backward(const Vec& u_lf, const Vec& h_lf_prev,
                                    const Vec& h_hf_prev, const GateParams& params,
                                    const Pair& d_logits, GateParams& grads);

// Gumbel(0, 1) noise -log(-log U) with U clamped to [1e-10, 1 - 1e-10].
Pair sample_gumbel(Rng& rng);

// softmax((logits + noise) / mu). Throws ParameterError for mu <= 0.
Pair gumbel_softmax(const Pair& logits, double mu, const Pair& noise);
Pair gumbel_softmax(const Pair& logits, double mu, Rng& rng);

// Gradient w.r.t. the logits given the gradient w.r.t. the soft output.
Pair gumbel_softmax_backward(const Pair& soft, double mu, const Pair& d_soft);

// argmax; an exact tie resolves to kHfOff.
int hard_gate(const Pair& logits);

}  // namespace pfd::gating
