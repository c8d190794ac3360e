#pragma once

#include "pfd/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace pfd::dsp {

inline constexpr int kDefaultSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  // Throws ParameterError if sample_rate <= 0 or any sample is non-finite.
  void validate() const;
};

enum class Window { Rectangular, Hann };

// Magnitude spectrogram, one row per frame, fft_size/2+1 columns.
// Frame count is floor((n - win) / hop) + 1. Throws TooShortError when the
// signal is shorter than one window.
Mat compute_stft(std::span<const double> samples, int win_samples,
                 int hop_samples, int fft_size,
                 Window window = Window::Hann);

inline int stft_frame_count(std::size_t n_samples, int win, int hop) {
  if (n_samples < static_cast<std::size_t>(win)) return 0;
  return static_cast<int>((n_samples - win) / hop) + 1;
}

// HTK mel scale: 2595 * log10(1 + f / 700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters [n_mels x (fft_size/2+1)] with peaks equally spaced on
// the mel scale between fmin and fmax. A filter too narrow to cover any FFT
// bin falls back to unit weight on the bin nearest its centre, so every row
// has a positive sum.
Mat mel_filterbank(int n_mels, int fft_size, double sample_rate, double fmin,
                   double fmax);

inline constexpr double kLogFloor = 1e-10;

// log(max(x, 1e-10)) of (power spectrum x filterbank^T).
Mat log_mel(const Mat& magnitude, const Mat& filterbank);

struct FrontEndConfig {
  int sample_rate = kDefaultSampleRate;
  int win_samples = 400;  // 25 ms
  int hop_samples = 160;  // 10 ms
  int fft_size = 512;
  int hf_mels = 128;
  int lf_mels = 64;
  int frames_per_window = 100;  // 1 s coarse window / 10 ms hop
  double fmin = 0.0;
  double fmax = 8000.0;

  int window_samples() const { return hop_samples * frames_per_window; }
};

// Both resolutions of an utterance. The signal is zero-padded to a whole
// number of coarse windows, so every window owns exactly frames_per_window
// fine frames; frames past the end of the real audio have valid = 0.
struct FrameFeatures {
  Mat hf;      // [n_windows * frames_per_window x hf_mels]
  Mat lf_mel;  // [n_windows * frames_per_window x lf_mels]
  std::vector<std::uint8_t> valid;
  int n_windows = 0;
  int frames_per_window = 0;
};

class FeatureExtractor {
 public:
  explicit FeatureExtractor(FrontEndConfig config = {});

  const FrontEndConfig& config() const { return config_; }

  FrameFeatures extract(const Waveform& w) const;

  // 128-bin log-mel per 10 ms frame, frames_per_window rows per window.
  Mat hf_features(const Waveform& w) const { return extract(w).hf; }

 private:
  FrontEndConfig config_;
  Mat hf_bank_;
  Mat lf_bank_;
};

int coarse_window_count(std::size_t n_samples, const FrontEndConfig& config);

}  // namespace pfd::dsp
