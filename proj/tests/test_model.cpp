#include "doctest.h"

#include "pfd/error.hpp"
#include "pfd/grad_check.hpp"
#include "pfd/model.hpp"
#include "pfd/nn_ops.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace pfd;
using namespace pfd::model;

namespace {

PfdConfig tiny_config() {
  PfdConfig c;
  c.lf_layers = 2;
  c.hf_layers = 2;
  c.hidden = 3;
  c.d_lf = 2;
  c.d_hf = 4;
  c.lf_mels = 5;
  c.fine_factor = 6;
  return c;
}

dsp::FrameFeatures random_features(const PfdConfig& c, int windows, int invalid_tail, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  dsp::FrameFeatures f;
  f.n_windows = windows;
  f.frames_per_window = c.fine_factor;
  const int n = windows * c.fine_factor;
  f.hf.resize(n, c.d_hf);
  f.lf_mel.resize(n, c.lf_mels);
  for (Eigen::Index i = 0; i < f.hf.size(); ++i) f.hf.data()[i] = d(rng);
  for (Eigen::Index i = 0; i < f.lf_mel.size(); ++i) f.lf_mel.data()[i] = d(rng);
  f.valid.assign(n, 1);
  for (int i = n - invalid_tail; i < n; ++i) f.valid[i] = 0;
  return f;
}

FrameLabels random_labels(std::size_t n, Rng& rng) {
  std::bernoulli_distribution b(0.5);
  FrameLabels l;
  l.fine.resize(n);
  for (auto& v : l.fine) v = b(rng) ? 1 : 0;
  return l;
}

std::vector<gating::Pair> random_noise(int windows, Rng& rng) {
  std::vector<gating::Pair> out;
  for (int t = 0; t < windows; ++t) out.push_back(gating::sample_gumbel(rng));
  return out;
}

double run_loss(const dsp::FrameFeatures& f, const PfdParams& p, const PfdConfig& c, GateMode mode,
                const FrameLabels& labels, std::span<const gating::Pair> noise = {}) {
  ForwardOptions o;
  o.mode = mode;
  o.labels = &labels;
  o.noise = noise;
  o.keep_cache = false;
  return forward_utterance(f, p, c, o).loss;
}

}  // namespace

TEST_SUITE("pfd_model") {

TEST_CASE("window loss with the gate off is the coarse BCE") {
  WindowTrace w;
  w.weights = {0.0, 1.0};
  w.coarse = 0.5;
  const std::vector<std::uint8_t> fine{1, 1}, valid{1, 1};
  const auto l = window_loss(w, 1, fine, valid, 0.1);
  CHECK(l.total == doctest::Approx(std::numbers::ln2));
}

TEST_CASE("window loss with the gate on charges lambda plus the summed fine BCE") {
  WindowTrace w;
  w.weights = {1.0, 0.0};
  w.hf_active = true;
  w.coarse = 0.9;
  w.fine = {0.5, 0.5};
  const std::vector<std::uint8_t> fine{1, 0}, valid{1, 1};
  const auto l = window_loss(w, 0, fine, valid, 0.1);
  CHECK(l.total == doctest::Approx(0.1 + 2.0 * std::numbers::ln2));
  const auto mean = window_loss(w, 0, fine, valid, 0.1, true);
  CHECK(mean.total == doctest::Approx(0.1 + std::numbers::ln2));
  const std::vector<std::uint8_t> half{1, 0};
  CHECK(window_loss(w, 0, fine, half, 0.1).total == doctest::Approx(0.1 + std::numbers::ln2));
}

TEST_CASE("window loss needs fine predictions for an active window") {
  WindowTrace w;
  w.weights = {1.0, 0.0};
  w.hf_active = true;
  const std::vector<std::uint8_t> fine{1, 1}, valid{1, 1};
  CHECK_THROWS_AS(window_loss(w, 1, fine, valid, 0.1), ContractError);
}

TEST_CASE("propagate state selects or blends") {
  Rng rng(1);
  nn::LstmState a = nn::LstmState::zeros(2, 3), b = nn::LstmState::zeros(2, 3);
  std::normal_distribution<double> d(0.0, 1.0);
  for (int l = 0; l < 2; ++l) {
    for (int j = 0; j < 3; ++j) {
      a.h[l][j] = d(rng);
      a.c[l][j] = d(rng);
      b.h[l][j] = d(rng);
      b.c[l][j] = d(rng);
    }
  }
  const auto on = propagate_state({1.0, 0.0}, a, b);
  const auto off = propagate_state({0.0, 1.0}, a, b);
  const auto mix = propagate_state({0.25, 0.75}, a, b);
  for (int l = 0; l < 2; ++l) {
    CHECK(on.h[l] == a.h[l]);
    CHECK(on.c[l] == a.c[l]);
    CHECK(off.h[l] == b.h[l]);
    CHECK(off.c[l] == b.c[l]);
    CHECK((mix.c[l] - (0.25 * a.c[l] + 0.75 * b.c[l])).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("zero parameters: every prediction is one half") {
  const PfdConfig c = tiny_config();
  const PfdParams p = PfdParams::zeros(c);
  Rng rng(2);
  const auto f = random_features(c, 3, 0, rng);
  const FrameLabels labels = random_labels(f.valid.size(), rng);
  CHECK(run_loss(f, p, c, GateMode::ForceOff, labels) == doctest::Approx(3 * std::numbers::ln2));
  CHECK(run_loss(f, p, c, GateMode::ForceOn, labels) ==
        doctest::Approx(3 * (c.lambda + c.fine_factor * std::numbers::ln2)));
  // tied logits resolve to skip
  ForwardOptions o;
  o.mode = GateMode::Hard;
  const ForwardPass pass = forward_utterance(f, p, c, o);
  CHECK(pass.active_windows() == 0);
}

TEST_CASE("always-off matches an independently assembled LF-only model") {
  const PfdConfig c = tiny_config();
  Rng rng(3);
  const PfdParams p = PfdParams::random(c, rng);
  const auto f = random_features(c, 4, 2, rng);
  const Detection det = detect(f, p, c, GateMode::ForceOff);

  Mat u(4, c.d_lf);
  for (int t = 0; t < 4; ++t) {
    u.row(t) = dsp::lf_encode_window(p.encoder, f.lf_mel.middleRows(t * c.fine_factor, c.fine_factor))
                   .transpose();
  }
  const nn::LstmOutput lf = nn::lstm_forward(p.lf, u, nn::LstmState::zeros(c.lf_layers, c.hidden), false);
  std::size_t k = 0;
  for (int t = 0; t < 4; ++t) {
    const double coarse = nn::project_sigmoid(p.lf_out_w, p.lf_out_b, lf.hidden.row(t).transpose());
    for (int i = 0; i < c.fine_factor; ++i) {
      if (!f.valid[t * c.fine_factor + i]) continue;
      REQUIRE(k < det.frames.scores.size());
      CHECK(det.frames.scores[k++] == nn::clip_prob(coarse));
    }
  }
  CHECK(k == det.frames.scores.size());
  for (int g : det.gate) CHECK(g == gating::kHfOff);
}

TEST_CASE("the fine stream is skipped when the gate is off") {
  const PfdConfig c = tiny_config();
  Rng rng(4);
  PfdParams p = PfdParams::random(c, rng);
  const auto f = random_features(c, 5, 0, rng);
  ForwardOptions o;
  o.mode = GateMode::Hard;
  for (double bias : {-50.0, 50.0}) {
    p.gate.bias(0, gating::kHfOn) = bias;
    const ForwardPass pass = forward_utterance(f, p, c, o);
    for (const auto& w : pass.windows) {
      CHECK(w.hf_active == (bias > 0));
      CHECK(w.fine.empty() == (bias < 0));
    }
  }
}

TEST_CASE("measured MACs equal the cost model") {
  const PfdConfig c = tiny_config();
  Rng rng(5);
  PfdParams p = PfdParams::random(c, rng);
  const auto f = random_features(c, 7, 0, rng);
  const CostModel cost = cost_model(p, c);
  for (GateMode m : {GateMode::Hard, GateMode::ForceOn, GateMode::ForceOff}) {
    ForwardOptions o;
    o.mode = m;
    o.keep_cache = false;
    nn::MacScope scope;
    const ForwardPass pass = forward_utterance(f, p, c, o);
    CHECK(scope.elapsed() == cost.gated(7, pass.active_windows()));
  }
  CHECK(cost.gated(7, 0) * 1 < cost.gated(7, 7));
}

TEST_CASE("relaxed-mode gradient matches finite differences") {
  PfdConfig c = tiny_config();
  Rng rng(6);
  for (bool mean : {false, true}) {
    c.mean_fine_loss = mean;
    PfdParams p = PfdParams::random(c, rng);
    const auto f = random_features(c, 3, 2, rng);
    const FrameLabels labels = random_labels(f.valid.size(), rng);
    const auto noise = random_noise(3, rng);

    ForwardOptions o;
    o.mode = GateMode::Relaxed;
    o.labels = &labels;
    o.noise = noise;
    const ForwardPass pass = forward_utterance(f, p, c, o);
    PfdParams g = PfdParams::zeros(c);
    backward_utterance(pass, f, labels, p, c, g, 0.7);

    const auto fn = [&] { return 0.7 * run_loss(f, p, c, GateMode::Relaxed, labels, noise); };
    const auto r = nn::grad_check(fn, p.trainable(), std::as_const(g).trainable());
    CAPTURE(r.worst_tensor);
    CHECK(r.passed(1e-4));
  }
}

TEST_CASE("hard-gate gradient is exact for the fixed decisions") {
  const PfdConfig c = tiny_config();
  Rng rng(7);
  PfdParams p = PfdParams::random(c, rng);
  p.gate.weight.setZero();
  p.gate.bias(0, gating::kHfOn) = 1.0;
  const auto f = random_features(c, 3, 0, rng);
  const FrameLabels labels = random_labels(f.valid.size(), rng);
  for (GateMode m : {GateMode::Hard, GateMode::ForceOn, GateMode::ForceOff}) {
    ForwardOptions o;
    o.mode = m;
    o.labels = &labels;
    const ForwardPass pass = forward_utterance(f, p, c, o);
    PfdParams g = PfdParams::zeros(c);
    backward_utterance(pass, f, labels, p, c, g);
    CHECK(g.gate.weight.cwiseAbs().maxCoeff() == 0.0);
    const auto fn = [&] { return run_loss(f, p, c, m, labels); };
    CHECK(nn::grad_check(fn, p.trainable(), std::as_const(g).trainable()).passed(1e-4));
  }
}

TEST_CASE("straight-through forward uses the hard sample") {
  const PfdConfig c = tiny_config();
  Rng rng(8);
  const PfdParams p = PfdParams::random(c, rng);
  const auto f = random_features(c, 6, 0, rng);
  const auto noise = random_noise(6, rng);
  ForwardOptions o;
  o.mode = GateMode::StraightThrough;
  o.noise = noise;
  const ForwardPass pass = forward_utterance(f, p, c, o);
  for (const auto& w : pass.windows) {
    const gating::Pair shifted{w.gate.logits[0] + w.gate.noise[0], w.gate.logits[1] + w.gate.noise[1]};
    CHECK(w.gate.hard == gating::hard_gate(shifted));
    CHECK(w.weights[w.gate.hard] == 1.0);
    CHECK(w.hf_active);
  }
}

TEST_CASE("contract violations") {
  const PfdConfig c = tiny_config();
  Rng rng(9);
  const PfdParams p = PfdParams::random(c, rng);
  auto f = random_features(c, 2, 0, rng);
  ForwardOptions o;
  o.mode = GateMode::Relaxed;
  CHECK_THROWS_AS(forward_utterance(f, p, c, o), ContractError);
  CHECK_THROWS_AS(detect(f, p, c, GateMode::StraightThrough), ParameterError);
  CHECK_THROWS_AS(hf_window(Mat::Zero(5, c.d_hf), Vec::Zero(c.d_lf),
                            nn::LstmState::zeros(c.hf_layers, c.hidden), p, c),
                  ContractError);
  f.frames_per_window = 5;
  CHECK_THROWS_AS(detect(f, p, c), ContractError);
  PfdConfig bad = c;
  bad.fine_factor = 2;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("straight-through gate gradient weighs both branch losses") {
  const PfdConfig c = tiny_config();
  Rng rng(9);
  const PfdParams p = PfdParams::random(c, rng);
  const auto f = random_features(c, 1, 0, rng);
  const FrameLabels labels = random_labels(f.valid.size(), rng);
  for (const gating::Pair noise : {gating::Pair{4.0, -4.0}, gating::Pair{-4.0, 4.0}}) {
    const std::vector<gating::Pair> n{noise};
    ForwardOptions o;
    o.mode = GateMode::StraightThrough;
    o.noise = n;
    o.labels = &labels;
    const ForwardPass pass = forward_utterance(f, p, c, o);
    PfdParams g = PfdParams::zeros(c);
    backward_utterance(pass, f, labels, p, c, g);

    WindowTrace on = pass.windows[0];
    on.weights = {1.0, 0.0};
    const std::vector<std::uint8_t> valid(f.valid.begin(), f.valid.end());
    const WindowLossTerms terms = window_loss(on, pass.coarse_labels[0], labels.fine, valid, c.lambda);
    const gating::Pair expect =
        gating::gumbel_softmax_backward(on.gate.soft, c.temperature, {terms.fine, terms.coarse});
    CHECK(g.gate.bias(0, 0) == doctest::Approx(expect[0]).epsilon(1e-10));
    CHECK(g.gate.bias(0, 1) == doctest::Approx(expect[1]).epsilon(1e-10));
    if (pass.windows[0].gate.hard == gating::kHfOff) {
      CHECK(g.hf_out_w.cwiseAbs().maxCoeff() == 0.0);
      CHECK(pass.loss == doctest::Approx(terms.coarse));
    } else {
      CHECK(g.lf_out_w.cwiseAbs().maxCoeff() == 0.0);
      CHECK(pass.loss == doctest::Approx(terms.fine));
    }
  }
}

TEST_CASE("gate mode names round trip") {
  for (GateMode m : {GateMode::Relaxed, GateMode::StraightThrough, GateMode::Hard, GateMode::ForceOn,
                     GateMode::ForceOff}) {
    CHECK(gate_mode_from_string(to_string(m)) == m);
  }
  CHECK_THROWS(gate_mode_from_string("sometimes"));
}

}  // TEST_SUITE
