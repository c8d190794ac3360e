#include "pfd/dsp.hpp"

#include "pfd/error.hpp"

#include <fftw3.h>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

namespace pfd::dsp {

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(int k) const { return std::hypot(out_[k][0], out_[k][1]); }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

std::vector<double> make_window(Window kind, int n) {
  std::vector<double> w(n, 1.0);
  if (kind == Window::Hann) {
    // periodic Hann
    for (int i = 0; i < n; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    }
  }
  return w;
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) {
    throw ParameterError(fmt::format("sample rate must be positive, got {}", sample_rate));
  }
  for (double s : samples) {
    if (!std::isfinite(s)) throw ParameterError("waveform contains non-finite samples");
  }
}

Mat compute_stft(std::span<const double> samples, int win_samples,
                 int hop_samples, int fft_size, Window window) {
  if (win_samples < 1 || win_samples > fft_size) {
    throw ParameterError(fmt::format("window {} must be in [1, fft_size={}]", win_samples, fft_size));
  }
  if (hop_samples < 1) throw ParameterError("hop must be >= 1");
  if (samples.size() < static_cast<std::size_t>(win_samples)) {
    throw TooShortError(fmt::format("signal too short: {} samples < window of {}",
                                    samples.size(), win_samples));
  }
  const int n_frames = stft_frame_count(samples.size(), win_samples, hop_samples);
  const int n_bins = fft_size / 2 + 1;
  const auto taper = make_window(window, win_samples);

  Mat out(n_frames, n_bins);
  RealFft fft(fft_size);
  double* buf = fft.input();
  for (int f = 0; f < n_frames; ++f) {
    const std::size_t offset = static_cast<std::size_t>(f) * hop_samples;
    for (int i = 0; i < win_samples; ++i) buf[i] = samples[offset + i] * taper[i];
    std::fill(buf + win_samples, buf + fft_size, 0.0);
    fft.execute();
    for (int k = 0; k < n_bins; ++k) out(f, k) = fft.magnitude(k);
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Mat mel_filterbank(int n_mels, int fft_size, double sample_rate, double fmin,
                   double fmax) {
  if (n_mels < 1) throw ParameterError("n_mels must be >= 1");
  if (fft_size < 2) throw ParameterError("fft_size must be >= 2");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw ParameterError(fmt::format(
        "invalid mel range [{}, {}] Hz for sample rate {}", fmin, fmax, sample_rate));
  }
  const int n_bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  const double bin_hz = sample_rate / fft_size;

  Mat bank = Mat::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > left && f <= centre) {
        w = (f - left) / (centre - left);
      } else if (f > centre && f < right) {
        w = (right - f) / (right - centre);
      }
      bank(m, k) = w;
    }
    if (bank.row(m).sum() <= 0.0) {
      const int nearest = std::clamp(static_cast<int>(std::lround(centre / bin_hz)), 0, n_bins - 1);
      bank(m, nearest) = 1.0;
    }
  }
  return bank;
}

Mat log_mel(const Mat& magnitude, const Mat& filterbank) {
  if (magnitude.cols() != filterbank.cols()) {
    throw DimensionError(fmt::format("spectrum has {} bins, filterbank expects {}",
                                     magnitude.cols(), filterbank.cols()));
  }
  Mat mel = magnitude.array().square().matrix() * filterbank.transpose();
  return mel.array().max(kLogFloor).log().matrix();
}

int coarse_window_count(std::size_t n_samples, const FrontEndConfig& config) {
  const std::size_t per = config.window_samples();
  return static_cast<int>((n_samples + per - 1) / per);
}

FeatureExtractor::FeatureExtractor(FrontEndConfig config) : config_(config) {
  if (config_.frames_per_window < 1) throw ParameterError("frames_per_window must be >= 1");
  if (config_.win_samples < config_.hop_samples) {
    throw ParameterError("analysis window shorter than the hop");
  }
  hf_bank_ = mel_filterbank(config_.hf_mels, config_.fft_size, config_.sample_rate,
                            config_.fmin, config_.fmax);
  lf_bank_ = mel_filterbank(config_.lf_mels, config_.fft_size, config_.sample_rate,
                            config_.fmin, config_.fmax);
}

FrameFeatures FeatureExtractor::extract(const Waveform& w) const {
  w.validate();
  if (w.sample_rate != config_.sample_rate) {
    throw ParameterError(fmt::format("expected {} Hz audio, got {} Hz",
                                     config_.sample_rate, w.sample_rate));
  }
  if (w.samples.empty()) throw TooShortError("empty waveform");

  const int n_windows = coarse_window_count(w.samples.size(), config_);
  const std::size_t padded_len = static_cast<std::size_t>(n_windows) * config_.window_samples();
  // Centre each analysis window on its 10 ms frame so that the padded signal
  // yields exactly padded_len / hop frames.
  const int pad_left = (config_.win_samples - config_.hop_samples) / 2;
  const int pad_right = config_.win_samples - config_.hop_samples - pad_left;
  std::vector<double> padded(pad_left + padded_len + pad_right, 0.0);
  std::copy(w.samples.begin(), w.samples.end(), padded.begin() + pad_left);

  const Mat mag = compute_stft(padded, config_.win_samples, config_.hop_samples,
                               config_.fft_size, Window::Hann);
  FrameFeatures out;
  out.n_windows = n_windows;
  out.frames_per_window = config_.frames_per_window;
  out.hf = log_mel(mag, hf_bank_);
  out.lf_mel = log_mel(mag, lf_bank_);
  const std::size_t n_frames = out.hf.rows();
  const std::size_t real_frames =
      (w.samples.size() + config_.hop_samples - 1) / config_.hop_samples;
  out.valid.assign(n_frames, 0);
  std::fill(out.valid.begin(), out.valid.begin() + std::min(real_frames, n_frames), 1);
  return out;
}

}  // namespace pfd::dsp
