#pragma once

#include "pfd/dsp.hpp"
#include "pfd/labels.hpp"
#include "pfd/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pfd::eval {

// Equal error rate in percent. scores are "real" probabilities, labels use
// kReal / kFake. A sample is accepted as real when score >= threshold; the
// sweep covers every distinct score plus +infinity, and the crossing is
// interpolated linearly between the two bracketing thresholds. All-equal
// scores give 50. Throws ContractError unless both classes are present.
double eer(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // fakes accepted / fakes
  double frr = 0.0;  // reals rejected / reals
};
std::vector<RocPoint> roc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Hard gate decisions (kHfOn / kHfOff) per window.
struct GateTrace {
  std::vector<int> decisions;

  void append(std::span<const int> windows);
};

// Fraction of windows with the HF stream on. Throws ContractError for an
// empty trace or a decision outside {0, 1}.
double activation_rate(const GateTrace& trace);

// IoU of the unions of the two span sets: 1 when both are empty, 0 when only
// one is.
double span_iou(std::span<const Span> predicted, std::span<const Span> truth);
double mean_span_iou(const std::vector<std::vector<Span>>& predicted,
                     const std::vector<std::vector<Span>>& truth);

// Utterance score: the lowest frame "real" score.
double utterance_score(std::span<const double> frame_scores);

// Gate-on frequency near manipulation boundaries versus elsewhere. A window
// is "near" when it lies within `radius` windows of a window containing a
// span start or end.
struct BoundaryStats {
  std::uint64_t near_windows = 0, near_on = 0;
  std::uint64_t far_windows = 0, far_on = 0;

  double near_rate() const { return near_windows ? static_cast<double>(near_on) / near_windows : 0.0; }
  double far_rate() const { return far_windows ? static_cast<double>(far_on) / far_windows : 0.0; }
  void add(std::span<const int> gate, std::span<const Span> spans, double window_seconds, int radius = 1);
};

// ---- speed benchmark ------------------------------------------------------

struct ModeReport {
  double median_seconds = 0.0;
  std::uint64_t measured_macs = 0;   // counted inside the forward primitives
  std::uint64_t predicted_macs = 0;  // T C_LF + active T' C_HF
  std::uint64_t windows = 0;
  std::uint64_t active = 0;

  double activation() const { return windows ? static_cast<double>(active) / windows : 0.0; }
};

struct BenchReport {
  ModeReport gated;
  ModeReport always_hf;
  ModeReport lf_only;

  double wall_speedup() const { return always_hf.median_seconds / gated.median_seconds; }
  double flop_ratio() const {
    return static_cast<double>(always_hf.measured_macs) / static_cast<double>(gated.measured_macs);
  }
};

// Times inference over precomputed features with the given gate modes
// (median of `repeats` passes over the set, single thread) and records MAC
// counts. `gated_mode` is normally Hard; ForceOn / ForceOff give the
// degenerate p = 1 / p = 0 cases.
BenchReport bench_speedup(const model::PfdParams& params, const model::PfdConfig& config,
                          const std::vector<dsp::FrameFeatures>& corpus, int repeats = 5,
                          model::GateMode gated_mode = model::GateMode::Hard);

// One scored utterance: frame scores with their ground truth, predicted and
// true spans, and the per-window gate.
struct UtteranceResult {
  std::string id;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<Span> predicted;
  std::vector<Span> truth;
  std::vector<int> gate;
};

struct MetricsReport {
  std::size_t utterances = 0;
  std::size_t frames = 0;
  double frame_eer = 0.0;      // percent
  double utterance_eer = 0.0;  // percent, minimum-frame pooling; NaN with one class
  double mean_iou = 0.0;
  double activation_rate = 0.0;
  BoundaryStats boundary;
};

MetricsReport summarize(const std::vector<UtteranceResult>& results, double window_seconds = 1.0);

}  // namespace pfd::eval
