#include "pfd/evaluation.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace pfd::eval {

namespace {

void check_binary(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  std::size_t& n_real, std::size_t& n_fake) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  n_real = n_fake = 0;
  for (auto y : labels) {
    if (y == kReal) ++n_real;
    else if (y == kFake) ++n_fake;
    else throw ContractError(fmt::format("label {} is neither real nor fake", int(y)));
  }
  if (n_real == 0 || n_fake == 0) throw ContractError("EER needs both real and fake samples");
}

}  // namespace

std::vector<RocPoint> roc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::size_t n_real = 0, n_fake = 0;
  check_binary(scores, labels, n_real, n_fake);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<RocPoint> out;
  std::size_t real_below = 0;
  std::size_t fake_at_or_above = n_fake;
  std::size_t i = 0;
  while (i < order.size()) {
    const double theta = scores[order[i]];
    out.push_back({theta, static_cast<double>(fake_at_or_above) / static_cast<double>(n_fake),
                   static_cast<double>(real_below) / static_cast<double>(n_real)});
    while (i < order.size() && scores[order[i]] == theta) {
      if (labels[order[i]] == kReal) ++real_below;
      else --fake_at_or_above;
      ++i;
    }
  }
  out.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return out;
}

double eer(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const std::vector<RocPoint> curve = roc(scores, labels);
  for (std::size_t k = 0; k < curve.size(); ++k) {
    const double d = curve[k].frr - curve[k].far;
    if (d < 0.0) continue;
    if (d == 0.0 || k == 0) return 100.0 * curve[k].far;
    const double d_prev = curve[k - 1].frr - curve[k - 1].far;
    const double alpha = -d_prev / (d - d_prev);
    return 100.0 * (curve[k - 1].far + alpha * (curve[k].far - curve[k - 1].far));
  }
  throw NumericError("EER sweep found no crossing");
}

void GateTrace::append(std::span<const int> windows) {
  decisions.insert(decisions.end(), windows.begin(), windows.end());
}

double activation_rate(const GateTrace& trace) {
  if (trace.decisions.empty()) throw ContractError("activation rate of an empty gate trace");
  std::size_t on = 0;
  for (int d : trace.decisions) {
    if (d != gating::kHfOn && d != gating::kHfOff) throw ContractError("gate decision outside {0, 1}");
    on += d == gating::kHfOn ? 1 : 0;
  }
  return static_cast<double>(on) / static_cast<double>(trace.decisions.size());
}

double span_iou(std::span<const Span> predicted, std::span<const Span> truth) {
  const auto a = merge_spans({predicted.begin(), predicted.end()});
  const auto b = merge_spans({truth.begin(), truth.end()});
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  double inter = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    inter += std::max(0.0, std::min(a[i].end, b[j].end) - std::max(a[i].start, b[j].start));
    if (a[i].end < b[j].end) ++i;
    else ++j;
  }
  double total = 0.0;
  for (const auto& s : a) total += s.length();
  for (const auto& s : b) total += s.length();
  const double uni = total - inter;
  return uni > 0.0 ? inter / uni : 1.0;
}

double mean_span_iou(const std::vector<std::vector<Span>>& predicted,
                     const std::vector<std::vector<Span>>& truth) {
  if (predicted.size() != truth.size()) throw ContractError("span lists differ in length");
  if (predicted.empty()) throw ContractError("no utterances to score");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += span_iou(predicted[i], truth[i]);
  return sum / static_cast<double>(predicted.size());
}

double utterance_score(std::span<const double> frame_scores) {
  if (frame_scores.empty()) throw ContractError("utterance without frame scores");
  return *std::min_element(frame_scores.begin(), frame_scores.end());
}

void BoundaryStats::add(std::span<const int> gate, std::span<const Span> spans, double window_seconds,
                        int radius) {
  const long n = static_cast<long>(gate.size());
  std::vector<bool> near(gate.size(), false);
  const auto mark = [&](double t) {
    const long w = static_cast<long>(std::floor(t / window_seconds));
    for (long k = w - radius; k <= w + radius; ++k) {
      if (k >= 0 && k < n) near[k] = true;
    }
  };
  for (const Span& s : spans) {
    mark(s.start);
    mark(std::max(s.start, s.end - 1e-9));
  }
  for (long k = 0; k < n; ++k) {
    const bool on = gate[k] == gating::kHfOn;
    if (near[k]) {
      ++near_windows;
      near_on += on;
    } else {
      ++far_windows;
      far_on += on;
    }
  }
}

namespace {

ModeReport run_mode(const model::PfdParams& params, const model::PfdConfig& config,
                    const std::vector<dsp::FrameFeatures>& corpus, int repeats, model::GateMode mode) {
  ModeReport rep;
  const model::CostModel cost = model::cost_model(params, config);
  std::vector<double> times;
  model::ForwardOptions opts;
  opts.mode = mode;
  opts.keep_cache = false;
  for (int r = 0; r < repeats; ++r) {
    nn::MacScope macs;
    std::uint64_t windows = 0, active = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& f : corpus) {
      const model::ForwardPass pass = model::forward_utterance(f, params, config, opts);
      windows += pass.windows.size();
      active += static_cast<std::uint64_t>(pass.active_windows());
    }
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
    rep.measured_macs = macs.elapsed();
    rep.windows = windows;
    rep.active = active;
  }
  rep.predicted_macs = cost.gated(rep.windows, rep.active);
  std::sort(times.begin(), times.end());
  rep.median_seconds = times[times.size() / 2];
  return rep;
}

}  // namespace

BenchReport bench_speedup(const model::PfdParams& params, const model::PfdConfig& config,
                          const std::vector<dsp::FrameFeatures>& corpus, int repeats,
                          model::GateMode gated_mode) {
  if (corpus.empty()) throw ContractError("benchmark corpus is empty");
  if (repeats < 1) throw ParameterError("repeats must be >= 1");
  if (gated_mode == model::GateMode::Relaxed || gated_mode == model::GateMode::StraightThrough) {
    throw ParameterError("benchmark needs a deterministic gate mode");
  }
  BenchReport rep;
  rep.gated = run_mode(params, config, corpus, repeats, gated_mode);
  rep.always_hf = run_mode(params, config, corpus, repeats, model::GateMode::ForceOn);
  rep.lf_only = run_mode(params, config, corpus, repeats, model::GateMode::ForceOff);
  return rep;
}

MetricsReport summarize(const std::vector<UtteranceResult>& results, double window_seconds) {
  if (results.empty()) throw ContractError("no utterances to summarize");
  MetricsReport rep;
  std::vector<double> frame_scores, utt_scores;
  std::vector<std::uint8_t> frame_labels, utt_labels;
  std::vector<std::vector<Span>> predicted, truth;
  GateTrace trace;
  for (const UtteranceResult& r : results) {
    if (r.scores.size() != r.labels.size()) {
      throw ContractError(fmt::format("utterance '{}': {} scores but {} labels", r.id, r.scores.size(), r.labels.size()));
    }
    frame_scores.insert(frame_scores.end(), r.scores.begin(), r.scores.end());
    frame_labels.insert(frame_labels.end(), r.labels.begin(), r.labels.end());
    utt_scores.push_back(utterance_score(r.scores));
    utt_labels.push_back(r.truth.empty() ? kReal : kFake);
    predicted.push_back(r.predicted);
    truth.push_back(r.truth);
    trace.append(r.gate);
    rep.boundary.add(r.gate, r.truth, window_seconds);
  }
  rep.utterances = results.size();
  rep.frames = frame_scores.size();
  rep.frame_eer = eer(frame_scores, frame_labels);
  const bool both = std::count(utt_labels.begin(), utt_labels.end(), kReal) > 0 &&
                    std::count(utt_labels.begin(), utt_labels.end(), kFake) > 0;
  rep.utterance_eer = both ? eer(utt_scores, utt_labels) : std::numeric_limits<double>::quiet_NaN();
  rep.mean_iou = mean_span_iou(predicted, truth);
  rep.activation_rate = trace.decisions.empty() ? 0.0 : activation_rate(trace);
  return rep;
}

}  // namespace pfd::eval
