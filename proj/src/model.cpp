#include "pfd/model.hpp"

#include "pfd/error.hpp"
#include "pfd/nn_ops.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pfd::model {

using gating::Pair;

void PfdConfig::validate() const {
  if (lf_layers < 1 || hf_layers < 1) throw ParameterError("layer counts must be >= 1");
  if (hidden < 1 || d_lf < 1 || d_hf < 1 || lf_mels < 1) throw ParameterError("widths must be >= 1");
  if (fine_factor < dsp::LfEncoderParams::min_frames()) {
    throw ParameterError(fmt::format("fine_factor must be >= {}", dsp::LfEncoderParams::min_frames()));
  }
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
  if (!(temperature > 0.0)) throw ParameterError("temperature must be > 0");
  if (!(lr > 0.0)) throw ParameterError("lr must be > 0");
}

FeatureNorm FeatureNorm::identity(int lf_mels, int d_hf) {
  return {Mat::Zero(1, lf_mels), Mat::Ones(1, lf_mels), Mat::Zero(1, d_hf), Mat::Ones(1, d_hf)};
}

PfdParams PfdParams::zeros(const PfdConfig& c) {
  c.validate();
  PfdParams p;
  p.encoder = dsp::LfEncoderParams::zeros(c.lf_mels, c.d_lf);
  p.lf = nn::LstmParams::zeros(c.d_lf, c.hidden, c.lf_layers);
  p.lf_out_w = Mat::Zero(1, c.hidden);
  p.lf_out_b = Mat::Zero(1, 1);
  p.gate = gating::GateParams::zeros(c.gate_width());
  p.hf = nn::LstmParams::zeros(c.d_hf + c.d_lf, c.hidden, c.hf_layers);
  p.hf_out_w = Mat::Zero(1, c.hidden);
  p.hf_out_b = Mat::Zero(1, 1);
  p.norm = FeatureNorm::identity(c.lf_mels, c.d_hf);
  return p;
}

PfdParams PfdParams::random(const PfdConfig& c, Rng& rng) {
  c.validate();
  PfdParams p = zeros(c);
  p.encoder = dsp::LfEncoderParams::random(c.lf_mels, c.d_lf, rng);
  p.lf = nn::LstmParams::random(c.d_lf, c.hidden, c.lf_layers, rng);
  nn::init_uniform(p.lf_out_w, c.hidden, rng);
  p.gate = gating::GateParams::random(c.gate_width(), rng);
  p.hf = nn::LstmParams::random(c.d_hf + c.d_lf, c.hidden, c.hf_layers, rng);
  nn::init_uniform(p.hf_out_w, c.hidden, rng);
  return p;
}

namespace {

template <typename Self, typename Out>
void collect(Self& p, Out& out) {
  out.emplace_back("encoder.conv1_w", &p.encoder.conv1_w);
  out.emplace_back("encoder.conv1_b", &p.encoder.conv1_b);
  out.emplace_back("encoder.conv2_w", &p.encoder.conv2_w);
  out.emplace_back("encoder.conv2_b", &p.encoder.conv2_b);
  for (std::size_t l = 0; l < p.lf.layers.size(); ++l) {
    out.emplace_back(fmt::format("lf.{}.w_ih", l), &p.lf.layers[l].w_ih);
    out.emplace_back(fmt::format("lf.{}.w_hh", l), &p.lf.layers[l].w_hh);
    out.emplace_back(fmt::format("lf.{}.bias", l), &p.lf.layers[l].bias);
  }
  out.emplace_back("lf_out.w", &p.lf_out_w);
  out.emplace_back("lf_out.b", &p.lf_out_b);
  out.emplace_back("gate.w", &p.gate.weight);
  out.emplace_back("gate.b", &p.gate.bias);
  for (std::size_t l = 0; l < p.hf.layers.size(); ++l) {
    out.emplace_back(fmt::format("hf.{}.w_ih", l), &p.hf.layers[l].w_ih);
    out.emplace_back(fmt::format("hf.{}.w_hh", l), &p.hf.layers[l].w_hh);
    out.emplace_back(fmt::format("hf.{}.bias", l), &p.hf.layers[l].bias);
  }
  out.emplace_back("hf_out.w", &p.hf_out_w);
  out.emplace_back("hf_out.b", &p.hf_out_b);
}

template <typename Self, typename Out>
void collect_norm(Self& p, Out& out) {
  out.emplace_back("norm.lf_mean", &p.norm.lf_mean);
  out.emplace_back("norm.lf_scale", &p.norm.lf_scale);
  out.emplace_back("norm.hf_mean", &p.norm.hf_mean);
  out.emplace_back("norm.hf_scale", &p.norm.hf_scale);
}

}  // namespace

std::vector<std::pair<std::string, Mat*>> PfdParams::all_named() {
  std::vector<std::pair<std::string, Mat*>> out;
  collect(*this, out);
  collect_norm(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Mat*>> PfdParams::all_named() const {
  std::vector<std::pair<std::string, const Mat*>> out;
  collect(*this, out);
  collect_norm(*this, out);
  return out;
}

std::vector<Mat*> PfdParams::trainable() {
  std::vector<std::pair<std::string, Mat*>> named;
  collect(*this, named);
  std::vector<Mat*> out;
  for (auto& [_, m] : named) out.push_back(m);
  return out;
}

std::vector<const Mat*> PfdParams::trainable() const {
  std::vector<std::pair<std::string, const Mat*>> named;
  collect(*this, named);
  std::vector<const Mat*> out;
  for (auto& [_, m] : named) out.push_back(m);
  return out;
}

std::vector<std::string> PfdParams::trainable_names() const {
  std::vector<std::pair<std::string, const Mat*>> named;
  collect(*this, named);
  std::vector<std::string> out;
  for (auto& [n, _] : named) out.push_back(n);
  return out;
}

void PfdParams::set_zero() {
  for (Mat* m : trainable()) m->setZero();
}

std::string to_string(GateMode mode) {
  switch (mode) {
    case GateMode::Relaxed: return "relaxed";
    case GateMode::StraightThrough: return "straight_through";
    case GateMode::Hard: return "hard";
    case GateMode::ForceOn: return "always_on";
    case GateMode::ForceOff: return "always_off";
  }
  return "?";
}

GateMode gate_mode_from_string(const std::string& s) {
  for (GateMode m : {GateMode::Relaxed, GateMode::StraightThrough, GateMode::Hard,
                     GateMode::ForceOn, GateMode::ForceOff}) {
    if (to_string(m) == s) return m;
  }
  throw ParameterError(fmt::format("unknown gate mode '{}'", s));
}

// ---------------------------------------------------------------------------

LfStepResult lf_step(const Vec& u_lf, const nn::LstmState& state, const PfdParams& params) {
  Mat x = u_lf.transpose();
  nn::LstmOutput run = nn::lstm_forward(params.lf, x, state, false);
  LfStepResult r;
  r.prob = nn::project_sigmoid(params.lf_out_w, params.lf_out_b, run.final_state.top());
  r.state = std::move(run.final_state);
  return r;
}

HfWindowResult hf_window(const Mat& u_hf, const Vec& u_lf, const nn::LstmState& state_in,
                         const PfdParams& params, const PfdConfig& config, bool keep_cache) {
  if (u_hf.rows() != config.fine_factor) {
    throw ContractError(fmt::format("HF window needs exactly {} fine frames, got {}",
                                    config.fine_factor, u_hf.rows()));
  }
  if (u_hf.cols() != config.d_hf || u_lf.size() != config.d_lf) {
    throw DimensionError("HF window input width mismatch");
  }
  const int F = config.fine_factor;
  Mat x(F, config.d_hf + config.d_lf);
  x.leftCols(config.d_hf) = u_hf;
  x.rightCols(config.d_lf) = u_lf.transpose().replicate(F, 1);

  HfWindowResult r;
  r.run = nn::lstm_forward(params.hf, x, state_in, keep_cache);
  r.candidate = r.run.final_state;
  nn::mac_counter() += static_cast<std::uint64_t>(F) * config.hidden;
  const Eigen::VectorXd z = r.run.hidden * params.hf_out_w.row(0).transpose();
  r.probs.resize(F);
  for (int i = 0; i < F; ++i) r.probs[i] = nn::sigmoid(z[i] + params.hf_out_b(0, 0));
  return r;
}

nn::LstmState propagate_state(const Pair& g, const nn::LstmState& candidate,
                              const nn::LstmState& previous) {
  if (candidate.h.size() != previous.h.size()) throw DimensionError("state layer count mismatch");
  nn::LstmState out = previous;
  for (std::size_t l = 0; l < previous.h.size(); ++l) {
    if (candidate.h[l].size() != previous.h[l].size()) throw DimensionError("state width mismatch");
    out.h[l] = g[0] * candidate.h[l] + g[1] * previous.h[l];
    out.c[l] = g[0] * candidate.c[l] + g[1] * previous.c[l];
  }
  return out;
}

WindowLossTerms window_loss(const WindowTrace& trace, std::uint8_t coarse_label,
                            std::span<const std::uint8_t> fine_labels,
                            std::span<const std::uint8_t> valid, double lambda,
                            bool mean_fine) {
  WindowLossTerms terms;
  terms.coarse = nn::bce(coarse_label, trace.coarse);
  if (trace.hf_active) {
    if (fine_labels.size() != trace.fine.size() || valid.size() != trace.fine.size()) {
      throw ContractError("fine labels missing for an active window");
    }
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < trace.fine.size(); ++i) {
      if (!valid[i]) continue;
      sum += nn::bce(fine_labels[i], trace.fine[i]);
      ++n;
    }
    if (mean_fine && n > 0) sum /= n;
    terms.fine = lambda + sum;
  }
  terms.total = trace.weights[1] * terms.coarse;
  if (trace.hf_active) terms.total += trace.weights[0] * terms.fine;
  return terms;
}

int ForwardPass::active_windows() const {
  int n = 0;
  for (const auto& w : windows) n += w.hf_active ? 1 : 0;
  return n;
}

namespace {

Mat normalize(const Mat& x, const Mat& mean, const Mat& scale) {
  if (x.cols() != mean.cols()) {
    throw DimensionError(fmt::format("feature width {} != normalizer width {}", x.cols(), mean.cols()));
  }
  Mat out = x;
  out.rowwise() -= mean.row(0);
  out.array().rowwise() /= scale.row(0).array();
  return out;
}

double state_dot(const nn::LstmState& a, const nn::LstmState& b) {
  double s = 0.0;
  for (std::size_t l = 0; l < a.h.size(); ++l) s += a.h[l].dot(b.h[l]) + a.c[l].dot(b.c[l]);
  return s;
}

void state_axpy(nn::LstmState& y, double alpha, const nn::LstmState& x) {
  for (std::size_t l = 0; l < y.h.size(); ++l) {
    y.h[l] += alpha * x.h[l];
    y.c[l] += alpha * x.c[l];
  }
}

nn::LstmState state_scaled(const nn::LstmState& x, double alpha) {
  nn::LstmState y = x;
  for (std::size_t l = 0; l < y.h.size(); ++l) {
    y.h[l] *= alpha;
    y.c[l] *= alpha;
  }
  return y;
}

bool stochastic(GateMode m) { return m == GateMode::Relaxed || m == GateMode::StraightThrough; }

}  // namespace

ForwardPass forward_utterance(const dsp::FrameFeatures& features, const PfdParams& params,
                              const PfdConfig& config, const ForwardOptions& options) {
  const int F = config.fine_factor;
  const int T = features.n_windows;
  if (features.frames_per_window != F) {
    throw ContractError(fmt::format("features have {} frames per window, model expects {}",
                                    features.frames_per_window, F));
  }
  if (T < 1 || features.hf.rows() != static_cast<Eigen::Index>(T) * F ||
      features.lf_mel.rows() != features.hf.rows() ||
      features.valid.size() != static_cast<std::size_t>(features.hf.rows())) {
    throw ContractError("feature matrices do not tile into coarse windows");
  }
  if (stochastic(options.mode) && options.noise.empty() && options.rng == nullptr) {
    throw ContractError("stochastic gate mode needs a noise source");
  }
  if (!options.noise.empty() && options.noise.size() != static_cast<std::size_t>(T)) {
    throw ContractError("fixed noise must have one entry per window");
  }

  ForwardPass pass;
  pass.mode = options.mode;
  pass.valid = features.valid;
  pass.lf_in = normalize(features.lf_mel, params.norm.lf_mean, params.norm.lf_scale);
  pass.hf_in = normalize(features.hf, params.norm.hf_mean, params.norm.hf_scale);
  if (options.labels != nullptr) {
    if (options.labels->fine.size() != features.valid.size()) {
      throw ContractError("frame labels do not match the feature frames");
    }
    pass.coarse_labels = coarse_labels(options.labels->fine, features.valid, F);
    pass.has_loss = true;
  }

  // LF stream: encoder per window, then the LSTM over all windows at once.
  Mat u(T, config.d_lf);
  if (options.keep_cache) pass.encoder.resize(T);
  for (int t = 0; t < T; ++t) {
    u.row(t) = dsp::lf_encode_window(params.encoder, pass.lf_in.middleRows(t * F, F),
                                     options.keep_cache ? &pass.encoder[t] : nullptr)
                   .transpose();
  }
  pass.lf_run = nn::lstm_forward(params.lf, u, nn::LstmState::zeros(config.lf_layers, config.hidden),
                                 options.keep_cache);

  const Vec zeros_h = Vec::Zero(config.hidden);
  nn::LstmState hf_state = nn::LstmState::zeros(config.hf_layers, config.hidden);
  pass.windows.resize(T);
  if (options.keep_cache) {
    pass.hf_prev.resize(T);
    pass.hf_runs.resize(T);
  }

  for (int t = 0; t < T; ++t) {
    WindowTrace& w = pass.windows[t];
    w.index = t;
    w.u_lf = u.row(t).transpose();
    const Vec h_lf_t = pass.lf_run.hidden.row(t).transpose();
    w.coarse = nn::project_sigmoid(params.lf_out_w, params.lf_out_b, h_lf_t);

    const Vec h_lf_prev = t > 0 ? Vec(pass.lf_run.hidden.row(t - 1).transpose()) : zeros_h;
    auto& g = w.gate;
    g.logits = gating::gate_logits(w.u_lf, h_lf_prev, hf_state.top(), params.gate);
    if (stochastic(options.mode)) {
      g.noise = options.noise.empty() ? gating::sample_gumbel(*options.rng) : options.noise[t];
      g.soft = gating::gumbel_softmax(g.logits, config.temperature, g.noise);
      g.hard = gating::hard_gate({g.logits[0] + g.noise[0], g.logits[1] + g.noise[1]});
    } else {
      g.noise = {0.0, 0.0};
      g.soft = gating::gumbel_softmax(g.logits, config.temperature, g.noise);
      g.hard = gating::hard_gate(g.logits);
    }
    switch (options.mode) {
      case GateMode::Relaxed: w.weights = g.soft; break;
      case GateMode::StraightThrough:
      case GateMode::Hard:
        w.weights = g.hard == gating::kHfOn ? Pair{1.0, 0.0} : Pair{0.0, 1.0};
        break;
      case GateMode::ForceOn: w.weights = {1.0, 0.0}; break;
      case GateMode::ForceOff: w.weights = {0.0, 1.0}; break;
    }
    if (options.mode == GateMode::ForceOn) g.hard = gating::kHfOn;
    if (options.mode == GateMode::ForceOff) g.hard = gating::kHfOff;

    // Both stochastic modes need the fine branch of every window: its loss
    // enters the gate gradient even when the sampled gate is off.
    w.hf_active = stochastic(options.mode) || w.weights[0] > 0.0;
    nn::LstmState merged = hf_state;
    if (w.hf_active) {
      HfWindowResult run = hf_window(pass.hf_in.middleRows(t * F, F), w.u_lf, hf_state, params,
                                     config, options.keep_cache);
      w.fine = run.probs;
      merged = propagate_state(w.weights, run.candidate, hf_state);
      if (options.keep_cache) pass.hf_runs[t] = std::move(run);
    }
    if (options.keep_cache) pass.hf_prev[t] = std::move(hf_state);
    hf_state = std::move(merged);

    if (pass.has_loss) {
      const auto begin = static_cast<std::size_t>(t) * F;
      std::span<const std::uint8_t> fine_labels(options.labels->fine.data() + begin, F);
      std::span<const std::uint8_t> valid(features.valid.data() + begin, F);
      w.loss = window_loss(w, pass.coarse_labels[t], fine_labels, valid, config.lambda,
                           config.mean_fine_loss)
                   .total;
      pass.loss += w.loss;
    }
  }
  return pass;
}

void backward_utterance(const ForwardPass& pass, const dsp::FrameFeatures& features,
                        const FrameLabels& labels, const PfdParams& params,
                        const PfdConfig& config, PfdParams& grads, double scale) {
  if (!pass.has_loss) throw ContractError("backward needs a forward pass with labels");
  const int F = config.fine_factor;
  const int T = static_cast<int>(pass.windows.size());
  if (static_cast<int>(pass.encoder.size()) != T || static_cast<int>(pass.hf_prev.size()) != T) {
    throw ContractError("backward needs a forward pass with keep_cache");
  }
  const int H = config.hidden;
  const bool gate_in_graph = stochastic(pass.mode);

  Mat d_lf_hidden = Mat::Zero(T, H);
  Mat d_u = Mat::Zero(T, config.d_lf);
  nn::LstmState d_state = nn::LstmState::zeros(config.hf_layers, H);
  const Vec zeros_h = Vec::Zero(H);

  for (int t = T - 1; t >= 0; --t) {
    const WindowTrace& w = pass.windows[t];
    const auto begin = static_cast<std::size_t>(t) * F;
    const Pair& G = w.weights;
    Pair d_g{0.0, 0.0};

    // coarse branch: G^1 * bce(y_t, sigmoid(W^lf h_t + b))
    const double coarse_bce = nn::bce(pass.coarse_labels[t], w.coarse);
    {
      const double z = std::log(w.coarse) - std::log1p(-w.coarse);
      const double d_z = scale * G[1] * nn::bce_grad_logit(pass.coarse_labels[t], z);
      const Vec h_lf_t = pass.lf_run.hidden.row(t).transpose();
      grads.lf_out_w.row(0) += d_z * h_lf_t.transpose();
      grads.lf_out_b(0, 0) += d_z;
      d_lf_hidden.row(t) += d_z * params.lf_out_w.row(0);
    }
    d_g[1] += scale * coarse_bce;

    const nn::LstmState& prev = pass.hf_prev[t];
    d_g[1] += state_dot(d_state, prev);
    nn::LstmState d_prev = state_scaled(d_state, G[1]);

    if (w.hf_active) {
      const HfWindowResult& run = *pass.hf_runs[t];
      int n_valid = 0;
      double fine_sum = 0.0;
      for (int i = 0; i < F; ++i) {
        if (features.valid[begin + i]) {
          ++n_valid;
          fine_sum += nn::bce(labels.fine[begin + i], w.fine[i]);
        }
      }
      const double fine_norm = (config.mean_fine_loss && n_valid > 0) ? 1.0 / n_valid : 1.0;
      d_g[0] += scale * (config.lambda + fine_sum * fine_norm);
      d_g[0] += state_dot(d_state, run.candidate);

      Mat d_hidden = Mat::Zero(F, H);
      for (int i = 0; i < F; ++i) {
        if (!features.valid[begin + i]) continue;
        const double p = w.fine[i];
        const double z = std::log(p) - std::log1p(-p);
        const double d_z = scale * G[0] * fine_norm * nn::bce_grad_logit(labels.fine[begin + i], z);
        if (d_z == 0.0) continue;
        grads.hf_out_w.row(0) += d_z * run.run.hidden.row(i);
        grads.hf_out_b(0, 0) += d_z;
        d_hidden.row(i) = d_z * params.hf_out_w.row(0);
      }
      const nn::LstmState d_candidate = state_scaled(d_state, G[0]);
      nn::LstmGradients back = nn::lstm_backward(params.hf, run.run.cache, d_hidden, d_candidate, grads.hf);
      state_axpy(d_prev, 1.0, back.d_init);
      d_u.row(t) += back.d_inputs.rightCols(config.d_lf).colwise().sum();
    }

    if (gate_in_graph) {
      const Pair d_logits = gating::gumbel_softmax_backward(w.gate.soft, config.temperature, d_g);
      const Vec h_lf_prev = t > 0 ? Vec(pass.lf_run.hidden.row(t - 1).transpose()) : zeros_h;
      const gating::GateInputGrads gi = gating::gate_logits_backward(
          w.u_lf, h_lf_prev, prev.top(), params.gate, d_logits, grads.gate);
      d_u.row(t) += gi.d_u_lf.transpose();
      if (t > 0) d_lf_hidden.row(t - 1) += gi.d_h_lf_prev.transpose();
      d_prev.h.back() += gi.d_h_hf_prev;
    }
    d_state = std::move(d_prev);
  }

  nn::LstmGradients lf_back =
      nn::lstm_backward(params.lf, pass.lf_run.cache, d_lf_hidden,
                        nn::LstmState::zeros(config.lf_layers, H), grads.lf);
  d_u += lf_back.d_inputs;
  for (int t = 0; t < T; ++t) {
    dsp::lf_encode_backward(params.encoder, pass.encoder[t], d_u.row(t).transpose(), grads.encoder);
  }
}

// ---------------------------------------------------------------------------

std::vector<double> frame_scores(const ForwardPass& pass, int fine_factor) {
  std::vector<double> scores;
  scores.reserve(pass.valid.size());
  for (const WindowTrace& w : pass.windows) {
    for (int i = 0; i < fine_factor; ++i) {
      const std::size_t idx = static_cast<std::size_t>(w.index) * fine_factor + i;
      if (!pass.valid[idx]) continue;
      const bool use_fine = w.hf_active && w.gate.hard == gating::kHfOn;
      scores.push_back(nn::clip_prob(use_fine ? w.fine[i] : w.coarse));
    }
  }
  return scores;
}

Detection detect(const dsp::FrameFeatures& features, const PfdParams& params,
                 const PfdConfig& config, GateMode mode, double hop_seconds) {
  if (stochastic(mode)) throw ParameterError("detect runs with a deterministic gate mode");
  ForwardOptions opts;
  opts.mode = mode;
  opts.keep_cache = false;
  const ForwardPass pass = forward_utterance(features, params, config, opts);
  Detection d;
  d.frames.scores = frame_scores(pass, config.fine_factor);
  d.frames.timestamps.resize(d.frames.scores.size());
  for (std::size_t i = 0; i < d.frames.scores.size(); ++i) d.frames.timestamps[i] = i * hop_seconds;
  d.fake_spans = spans_from_scores(d.frames.scores, hop_seconds, 0.5);
  for (const auto& w : pass.windows) d.gate.push_back(w.gate.hard);
  return d;
}

std::uint64_t CostModel::gated(std::uint64_t windows, std::uint64_t active) const {
  return windows * lf_per_window + active * fine_factor * hf_per_frame;
}

CostModel cost_model(const PfdParams& params, const PfdConfig& config) {
  CostModel c;
  c.lf_per_window = params.encoder.macs_per_window(config.fine_factor) + params.lf.macs_per_step() +
                    static_cast<std::uint64_t>(config.hidden) +
                    2ull * static_cast<std::uint64_t>(config.gate_width());
  c.hf_per_frame = params.hf.macs_per_step() + static_cast<std::uint64_t>(config.hidden);
  c.fine_factor = static_cast<std::uint64_t>(config.fine_factor);
  return c;
}

}  // namespace pfd::model
