#include "pfd/labels.hpp"

#include "pfd/error.hpp"

#include <algorithm>
#include <cmath>

namespace pfd {

std::vector<std::uint8_t> frame_labels_from_spans(std::span<const Span> spans,
                                                  std::size_t n_frames,
                                                  double hop_seconds) {
  std::vector<std::uint8_t> labels(n_frames, kReal);
  for (const Span& s : spans) {
    if (!(s.end > s.start)) continue;
    // Frame i overlaps iff i*hop < end and (i+1)*hop > start. The tolerance
    // keeps a span ending exactly on a frame edge out of the next frame.
    constexpr double kTol = 1e-9;
    const auto first = static_cast<long>(std::floor(s.start / hop_seconds + kTol));
    const auto last = static_cast<long>(std::ceil(s.end / hop_seconds - kTol)) - 1;
    for (long i = std::max(first, 0L); i <= last && i < static_cast<long>(n_frames); ++i) {
      labels[i] = kFake;
    }
  }
  return labels;
}

std::vector<std::uint8_t> coarse_labels(std::span<const std::uint8_t> fine,
                                        std::span<const std::uint8_t> valid,
                                        int frames_per_window) {
  if (fine.size() != valid.size() || frames_per_window < 1 ||
      fine.size() % frames_per_window != 0) {
    throw ContractError("frame labels do not tile into coarse windows");
  }
  const std::size_t n = fine.size() / frames_per_window;
  std::vector<std::uint8_t> out(n, kReal);
  for (std::size_t t = 0; t < n; ++t) {
    for (int k = 0; k < frames_per_window; ++k) {
      const std::size_t i = t * frames_per_window + k;
      if (valid[i] && fine[i] == kFake) {
        out[t] = kFake;
        break;
      }
    }
  }
  return out;
}

std::vector<Span> spans_from_scores(std::span<const double> scores, double hop_seconds,
                                    double threshold) {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < scores.size()) {
    if (scores[i] < threshold) {
      std::size_t j = i;
      while (j < scores.size() && scores[j] < threshold) ++j;
      out.push_back({i * hop_seconds, j * hop_seconds});
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<Span> merge_spans(std::vector<Span> spans) {
  std::erase_if(spans, [](const Span& s) { return !(s.end > s.start); });
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  std::vector<Span> out;
  for (const Span& s : spans) {
    if (!out.empty() && s.start <= out.back().end) {
      out.back().end = std::max(out.back().end, s.end);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

void ScoredFrames::validate() const {
  if (scores.size() != timestamps.size() || (!labels.empty() && labels.size() != scores.size())) {
    throw ContractError("scored frames: length mismatch");
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (!(timestamps[i] > timestamps[i - 1])) {
      throw ContractError("scored frames: timestamps not strictly increasing");
    }
  }
}

}  // namespace pfd
