#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pfd {

// Half-open time interval [start, end) in seconds.
struct Span {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

// Frame label convention: 1 = real (bona fide), 0 = fake.
inline constexpr std::uint8_t kReal = 1;
inline constexpr std::uint8_t kFake = 0;

// Frame i covers [i*hop, (i+1)*hop). A frame is fake when it overlaps any
// span with positive measure; frames straddling a span edge are fake.
std::vector<std::uint8_t> frame_labels_from_spans(std::span<const Span> spans,
                                                  std::size_t n_frames,
                                                  double hop_seconds);

// Coarse label per window: fake if any valid frame of the window is fake.
std::vector<std::uint8_t> coarse_labels(std::span<const std::uint8_t> fine,
                                        std::span<const std::uint8_t> valid,
                                        int frames_per_window);

// Maximal runs of frames whose score is below threshold, as time spans.
std::vector<Span> spans_from_scores(std::span<const double> scores, double hop_seconds,
                                    double threshold = 0.5);

// Sorted, merged union of spans.
std::vector<Span> merge_spans(std::vector<Span> spans);

// Per-10 ms frame "real" probabilities for one utterance.
struct ScoredFrames {
  std::string utterance_id;
  std::vector<double> scores;
  std::vector<double> timestamps;   // frame start times, seconds
  std::vector<std::uint8_t> labels;  // empty when ground truth is unknown

  // Throws ContractError on length mismatch or non-increasing timestamps.
  void validate() const;
};

}  // namespace pfd
