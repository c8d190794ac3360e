#include "doctest.h"

#include "pfd/dsp.hpp"
#include "pfd/error.hpp"
#include "pfd/lf_encoder.hpp"
#include "pfd/grad_check.hpp"
#include "pfd/wav_io.hpp"

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

using namespace pfd;
using namespace pfd::dsp;

namespace {

// Direct O(N^2) DFT magnitude of one zero-padded frame.
std::vector<double> naive_dft_mag(const std::vector<double>& frame, int fft_size) {
  std::vector<double> out(fft_size / 2 + 1);
  for (int k = 0; k <= fft_size / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < frame.size(); ++n) {
      acc += frame[n] * std::polar(1.0, -2.0 * std::numbers::pi * k * n / fft_size);
    }
    out[k] = std::abs(acc);
  }
  return out;
}

Waveform noise(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  Waveform w;
  w.samples.resize(n);
  for (double& s : w.samples) s = d(rng);
  return w;
}

}  // namespace

TEST_SUITE("dsp_features") {

TEST_CASE("stft of silence is zero") {
  std::vector<double> x(16000, 0.0);
  const Mat m = compute_stft(x, 400, 160, 512);
  CHECK(m.rows() == stft_frame_count(16000, 400, 160));
  CHECK(m.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("impulse at frame start gives a flat unit spectrum") {
  std::vector<double> x(512, 0.0);
  x[0] = 1.0;
  const Mat m = compute_stft(x, 512, 512, 512, Window::Rectangular);
  REQUIRE(m.rows() == 1);
  for (Eigen::Index k = 0; k < m.cols(); ++k) CHECK(m(0, k) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bin-centred sine concentrates its energy") {
  const int n = 512, k0 = 37;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * k0 * i / n);
  const Mat m = compute_stft(x, n, n, n, Window::Rectangular);
  const double total = m.row(0).squaredNorm();
  CHECK(m(0, k0) * m(0, k0) / total >= 0.95);
}

TEST_CASE("stft matches a direct DFT") {
  const Waveform w = noise(2000, 3);
  const int win = 400, hop = 160, fft = 512;
  const Mat m = compute_stft(w.samples, win, hop, fft, Window::Hann);
  for (int f : {0, 3, static_cast<int>(m.rows()) - 1}) {
    std::vector<double> frame(win);
    for (int i = 0; i < win; ++i) {
      const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
      frame[i] = w.samples[f * hop + i] * hann;
    }
    const auto ref = naive_dft_mag(frame, fft);
    for (int k = 0; k <= fft / 2; ++k) CHECK(m(f, k) == doctest::Approx(ref[k]).epsilon(1e-9));
  }
}

TEST_CASE("stft errors") {
  std::vector<double> x(100, 0.0);
  CHECK_THROWS_AS(compute_stft(x, 400, 160, 512), TooShortError);
  CHECK_THROWS_AS(compute_stft(x, 600, 160, 512), ParameterError);
  CHECK_THROWS_AS(compute_stft(x, 50, 0, 512), ParameterError);
}

TEST_CASE("frame count arithmetic over random lengths") {
  Rng rng(11);
  std::uniform_int_distribution<int> len(1, 5000), win(1, 512), hop(1, 400);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = len(rng), w = win(rng), h = hop(rng);
    std::vector<double> x(n, 0.25);
    if (n < w) {
      CHECK_THROWS_AS(compute_stft(x, w, h, 512), TooShortError);
      continue;
    }
    const Mat m = compute_stft(x, w, h, 512);
    CHECK(m.rows() == (n - w) / h + 1);
    CHECK(m.cols() == 257);
  }
}

TEST_CASE("HTK mel formula") {
  CHECK(hz_to_mel(1000.0) == doctest::Approx(2595.0 * std::log10(1.0 + 1000.0 / 700.0)));
  CHECK(hz_to_mel(1000.0) == doctest::Approx(999.99).epsilon(1e-4));
  for (double f : {0.0, 55.0, 440.0, 7999.0}) CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f));
}

TEST_CASE("mel filterbank shape and rows") {
  const Mat b = mel_filterbank(64, 512, 16000, 0, 8000);
  CHECK(b.rows() == 64);
  CHECK(b.cols() == 257);
  CHECK(b.minCoeff() >= 0.0);
  for (Eigen::Index r = 0; r < b.rows(); ++r) CHECK(b.row(r).sum() > 0.0);
  const Mat b128 = mel_filterbank(128, 512, 16000, 0, 8000);
  for (Eigen::Index r = 0; r < b128.rows(); ++r) CHECK(b128.row(r).sum() > 0.0);
}

TEST_CASE("single mel filter spans the whole range as one triangle") {
  const Mat b = mel_filterbank(1, 512, 16000, 0, 8000);
  const double bin_hz = 16000.0 / 512;
  const double centre = mel_to_hz(hz_to_mel(8000.0) / 2.0);
  Eigen::Index peak = 0;
  b.row(0).maxCoeff(&peak);
  CHECK(std::abs(peak * bin_hz - centre) <= bin_hz);
  // rising then falling
  for (Eigen::Index k = 1; k <= peak; ++k) CHECK(b(0, k) >= b(0, k - 1));
  for (Eigen::Index k = peak + 1; k < b.cols(); ++k) CHECK(b(0, k) <= b(0, k - 1));
  CHECK(b(0, 0) == 0.0);
}

TEST_CASE("mel filters peak at mel-spaced centres") {
  const int n = 20;
  const Mat b = mel_filterbank(n, 4096, 16000, 100, 7000);
  const double bin_hz = 16000.0 / 4096;
  for (int m = 0; m < n; ++m) {
    const double centre =
        mel_to_hz(hz_to_mel(100) + (hz_to_mel(7000) - hz_to_mel(100)) * (m + 1) / (n + 1));
    Eigen::Index peak = 0;
    b.row(m).maxCoeff(&peak);
    CHECK(std::abs(peak * bin_hz - centre) <= bin_hz);
  }
}

TEST_CASE("mel filterbank rejects bad ranges") {
  CHECK_THROWS_AS(mel_filterbank(10, 512, 16000, 500, 400), ParameterError);
  CHECK_THROWS_AS(mel_filterbank(10, 512, 16000, 0, 9000), ParameterError);
  CHECK_THROWS_AS(mel_filterbank(0, 512, 16000, 0, 8000), ParameterError);
}

TEST_CASE("log mel is finite on silence") {
  FeatureExtractor fx;
  Waveform w;
  w.samples.assign(16000, 0.0);
  const FrameFeatures f = fx.extract(w);
  CHECK(f.hf.allFinite());
  CHECK(f.hf.maxCoeff() == doctest::Approx(std::log(kLogFloor)));
}

TEST_CASE("fine frames per coarse window") {
  FeatureExtractor fx;
  for (double seconds : {1.0, 3.0}) {
    const Waveform w = noise(static_cast<std::size_t>(seconds * 16000), 5);
    const FrameFeatures f = fx.extract(w);
    CHECK(f.n_windows == static_cast<int>(seconds));
    CHECK(f.hf.rows() == 100 * f.n_windows);
    CHECK(f.hf.cols() == 128);
    CHECK(f.lf_mel.cols() == 64);
    CHECK(std::count(f.valid.begin(), f.valid.end(), 1) == 100 * f.n_windows);
  }
}

TEST_CASE("partial window is padded and masked") {
  FeatureExtractor fx;
  const Waveform w = noise(16000 + 4000, 6);
  const FrameFeatures f = fx.extract(w);
  CHECK(f.n_windows == 2);
  CHECK(f.hf.rows() == 200);
  CHECK(std::count(f.valid.begin(), f.valid.end(), 1) == 125);
  CHECK(f.valid[124] == 1);
  CHECK(f.valid[125] == 0);
}

TEST_CASE("features are deterministic") {
  FeatureExtractor fx;
  const Waveform w = noise(24000, 8);
  const FrameFeatures a = fx.extract(w), b = fx.extract(w);
  CHECK(a.hf == b.hf);
  CHECK(a.lf_mel == b.lf_mel);
}

TEST_CASE("extractor rejects other sample rates and empty audio") {
  FeatureExtractor fx;
  Waveform w = noise(8000, 1);
  w.sample_rate = 8000;
  CHECK_THROWS_AS(fx.extract(w), ParameterError);
  CHECK_THROWS_AS(fx.extract(Waveform{}), TooShortError);
  Waveform bad = noise(100, 1);
  bad.samples[3] = std::nan("");
  CHECK_THROWS_AS(fx.extract(bad), ParameterError);
}

TEST_CASE("lf encoder on constant input depends only on biases") {
  Rng rng(2);
  const LfEncoderParams p = LfEncoderParams::random(64, 32, rng);
  FeatureExtractor fx;
  Waveform w;
  w.samples.assign(3 * 16000, 0.0);
  const FrameFeatures f = fx.extract(w);
  const Mat u = lf_encode(p, f.lf_mel, 100);
  REQUIRE(u.rows() == 3);
  CHECK(u.row(0) == u.row(1));
  CHECK(u.row(1) == u.row(2));
  LfEncoderParams no_bias = p;
  no_bias.conv1_b.setZero();
  no_bias.conv2_b.setZero();
  const Mat zero_in = Mat::Zero(100, 64);
  CHECK(lf_encode(no_bias, zero_in, 100).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lf encoder gradient matches finite differences") {
  Rng rng(4);
  LfEncoderParams p = LfEncoderParams::random(6, 5, rng);
  Mat x(12, 6);
  std::normal_distribution<double> d(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = d(rng);
  Vec weights(5);
  for (int i = 0; i < 5; ++i) weights[i] = d(rng);
  const auto f = [&] { return lf_encode_window(p, x).dot(weights); };
  LfEncoderCache cache;
  lf_encode_window(p, x, &cache);
  LfEncoderParams g = LfEncoderParams::zeros(6, 5);
  lf_encode_backward(p, cache, weights, g);
  std::vector<Mat*> params{&p.conv1_w, &p.conv1_b, &p.conv2_w, &p.conv2_b};
  std::vector<const Mat*> grads{&g.conv1_w, &g.conv1_b, &g.conv2_w, &g.conv2_b};
  const auto r = nn::grad_check(f, params, grads);
  CHECK(r.passed(1e-4));
}

TEST_CASE("wav round trip") {
  const auto path = std::filesystem::temp_directory_path() / "pfd_test_roundtrip.wav";
  Waveform w = noise(1234, 9, 0.2);
  write_wav(path, w);
  const Waveform r = read_wav(path);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(r.samples[i] == quantize_pcm16(w.samples[i]));
  CHECK_THROWS_AS(read_wav(path, 8000), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_wav(path), IoError);
}

}  // TEST_SUITE
