#pragma once

#include "pfd/dsp.hpp"
#include "pfd/gating.hpp"
#include "pfd/labels.hpp"
#include "pfd/lf_encoder.hpp"
#include "pfd/lstm.hpp"
#include "pfd/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pfd::model {

struct PfdConfig {
  int lf_layers = 4;
  int hf_layers = 4;  // 64 reproduces the original depth; 4 is the desk default
  int hidden = 128;
  int d_lf = 32;
  int d_hf = 128;
  int lf_mels = 64;
  int fine_factor = 100;  // T'
  double lambda = 0.1;
  double temperature = 1.0;  // mu
  double lr = 1e-5;
  std::uint64_t seed = 0;
  // Eq. (6) sums fine-frame BCE over the window; true averages it instead.
  bool mean_fine_loss = false;

  void validate() const;
  int gate_width() const { return d_lf + 2 * hidden; }
};

// Per-bin affine normalization of the log-mel inputs, fitted on training
// data. Not trained by the optimizer.
struct FeatureNorm {
  Mat lf_mean, lf_scale;  // [1 x lf_mels]
  Mat hf_mean, hf_scale;  // [1 x d_hf]

  static FeatureNorm identity(int lf_mels, int d_hf);
};

struct PfdParams {
  dsp::LfEncoderParams encoder;
  nn::LstmParams lf;
  Mat lf_out_w;  // W^lf [1 x H]
  Mat lf_out_b;  // [1 x 1]
  gating::GateParams gate;
  nn::LstmParams hf;
  Mat hf_out_w;  // W^hf [1 x H]
  Mat hf_out_b;  // [1 x 1]
  FeatureNorm norm;

  static PfdParams zeros(const PfdConfig& config);
  static PfdParams random(const PfdConfig& config, Rng& rng);

  std::vector<Mat*> trainable();
  std::vector<const Mat*> trainable() const;
  std::vector<std::string> trainable_names() const;
  // Includes the feature normalization, for checkpoints.
  std::vector<std::pair<std::string, Mat*>> all_named();
  std::vector<std::pair<std::string, const Mat*>> all_named() const;
  void set_zero();
};

enum class GateMode {
  Relaxed,          // soft Gumbel-Softmax weights in the forward pass
  StraightThrough,  // hard sample forward, soft gradient; fine branch always computed
  Hard,             // argmax of the noiseless logits (inference)
  ForceOn,          // HF in every window
  ForceOff,         // HF never runs (LF-only model)
};

std::string to_string(GateMode mode);
GateMode gate_mode_from_string(const std::string& s);

struct FrameLabels {
  std::vector<std::uint8_t> fine;  // per frame, 1 = real
};

struct WindowTrace {
  int index = 0;
  Vec u_lf;
  gating::GateDecision gate;
  gating::Pair weights{};  // G_t values used in the forward pass
  double coarse = 0.5;     // y_hat_t
  std::vector<double> fine;  // y_hat_tau, only when the HF stream ran
  bool hf_active = false;
  double loss = 0.0;  // L_t, when labels were supplied
};

// ---- single-step operations -------------------------------------------

struct LfStepResult {
  double prob = 0.5;
  nn::LstmState state;
};

// One LF-LSTM step followed by sigmoid(W^lf h_t).
LfStepResult lf_step(const Vec& u_lf, const nn::LstmState& state, const PfdParams& params);

struct HfWindowResult {
  std::vector<double> probs;  // T' fine predictions
  nn::LstmState candidate;    // h'/c' after the last fine step
  nn::LstmOutput run;         // hidden sequence and cache
};

// Runs the HF-LSTM over [u_hf_tau, u_lf] for tau = 1..T'. u_hf must have
// exactly fine_factor rows (ContractError otherwise).
HfWindowResult hf_window(const Mat& u_hf, const Vec& u_lf, const nn::LstmState& state_in,
                         const PfdParams& params, const PfdConfig& config,
                         bool keep_cache = true);

// G^0 * candidate + G^1 * previous, layer by layer for h and c.
nn::LstmState propagate_state(const gating::Pair& g, const nn::LstmState& candidate,
                              const nn::LstmState& previous);

struct WindowLossTerms {
  double fine = 0.0;    // lambda + (summed or mean) fine BCE
  double coarse = 0.0;  // coarse BCE
  double total = 0.0;   // G^0 * fine + G^1 * coarse
};

// L_t = G^0 (lambda + sum_tau bce(y_tau, y_hat_tau)) + G^1 bce(y_t, y_hat_t).
// Frames with valid = 0 contribute nothing. ContractError if fine labels are
// missing for an active window.
WindowLossTerms window_loss(const WindowTrace& trace, std::uint8_t coarse_label,
                            std::span<const std::uint8_t> fine_labels,
                            std::span<const std::uint8_t> valid, double lambda,
                            bool mean_fine = false);

// ---- whole utterance ----------------------------------------------------

struct ForwardOptions {
  GateMode mode = GateMode::Hard;
  Rng* rng = nullptr;                      // Gumbel noise source (Relaxed / StraightThrough)
  std::span<const gating::Pair> noise{};   // fixed per-window noise, overrides rng
  const FrameLabels* labels = nullptr;     // enables the loss
  bool keep_cache = true;
};

struct ForwardPass {
  GateMode mode = GateMode::Hard;
  std::vector<WindowTrace> windows;
  double loss = 0.0;  // sum of L_t when labels were supplied
  bool has_loss = false;

  // activations kept for the backward pass
  Mat lf_in;  // normalized
  Mat hf_in;
  std::vector<dsp::LfEncoderCache> encoder;
  nn::LstmOutput lf_run;
  std::vector<nn::LstmState> hf_prev;  // merged HF state entering window t
  std::vector<std::optional<HfWindowResult>> hf_runs;
  std::vector<std::uint8_t> coarse_labels;
  std::vector<std::uint8_t> valid;

  int active_windows() const;
};

ForwardPass forward_utterance(const dsp::FrameFeatures& features, const PfdParams& params,
                              const PfdConfig& config, const ForwardOptions& options);

// Accumulates d(scale * loss) / d params into grads. Requires a pass run
// with labels and keep_cache.
void backward_utterance(const ForwardPass& pass, const dsp::FrameFeatures& features,
                        const FrameLabels& labels, const PfdParams& params,
                        const PfdConfig& config, PfdParams& grads, double scale = 1.0);

// ---- inference ----------------------------------------------------------

struct Detection {
  ScoredFrames frames;
  std::vector<Span> fake_spans;
  std::vector<int> gate;  // hard decision per window
};

// Per-frame "real" probabilities over the valid frames. Windows with the
// gate off broadcast the coarse prediction to all their frames.
Detection detect(const dsp::FrameFeatures& features, const PfdParams& params,
                 const PfdConfig& config, GateMode mode = GateMode::Hard,
                 double hop_seconds = 0.01);

// Frame scores in frame order for any forward pass (valid frames only).
std::vector<double> frame_scores(const ForwardPass& pass, int fine_factor);

// ---- cost model ---------------------------------------------------------

struct CostModel {
  std::uint64_t lf_per_window = 0;  // C_LF: encoder + LF-LSTM + W^lf + gate
  std::uint64_t hf_per_frame = 0;   // C_HF: HF-LSTM step + W^hf
  std::uint64_t fine_factor = 0;

  // T C_LF + active T' C_HF
  std::uint64_t gated(std::uint64_t windows, std::uint64_t active) const;
};

CostModel cost_model(const PfdParams& params, const PfdConfig& config);

}  // namespace pfd::model
