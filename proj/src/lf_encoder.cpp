#include "pfd/lf_encoder.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>

namespace pfd::dsp {

namespace {

constexpr int K = LfEncoderParams::kKernel;

Mat im2col(const Mat& x) {
  const Eigen::Index rows = x.rows() - (K - 1);
  const Eigen::Index c = x.cols();
  Mat cols(rows, K * c);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int k = 0; k < K; ++k) cols.block(r, k * c, 1, c) = x.row(r + k);
  }
  return cols;
}

// Adjoint of im2col.
Mat col2im(const Mat& d_cols, Eigen::Index channels) {
  Mat dx = Mat::Zero(d_cols.rows() + (K - 1), channels);
  for (Eigen::Index r = 0; r < d_cols.rows(); ++r) {
    for (int k = 0; k < K; ++k) dx.row(r + k) += d_cols.block(r, k * channels, 1, channels);
  }
  return dx;
}

}  // namespace

LfEncoderParams LfEncoderParams::zeros(int in_channels, int out_channels) {
  if (in_channels < 1 || out_channels < 1) throw ParameterError("encoder channels must be >= 1");
  LfEncoderParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.conv1_w = Mat::Zero(out_channels, K * in_channels);
  p.conv1_b = Mat::Zero(1, out_channels);
  p.conv2_w = Mat::Zero(out_channels, K * out_channels);
  p.conv2_b = Mat::Zero(1, out_channels);
  return p;
}

LfEncoderParams LfEncoderParams::random(int in_channels, int out_channels, Rng& rng) {
  LfEncoderParams p = zeros(in_channels, out_channels);
  nn::init_uniform(p.conv1_w, K * in_channels, rng);
  nn::init_uniform(p.conv1_b, K * in_channels, rng);
  nn::init_uniform(p.conv2_w, K * out_channels, rng);
  nn::init_uniform(p.conv2_b, K * out_channels, rng);
  return p;
}

std::uint64_t LfEncoderParams::macs_per_window(int frames) const {
  return static_cast<std::uint64_t>(frames - 2) * K * in_channels * out_channels +
         static_cast<std::uint64_t>(frames - 4) * K * out_channels * out_channels;
}

Vec lf_encode_window(const LfEncoderParams& params, const Mat& frames, LfEncoderCache* cache) {
  if (frames.cols() != params.in_channels) {
    throw DimensionError(fmt::format("encoder expects {} channels, got {}",
                                     params.in_channels, frames.cols()));
  }
  if (frames.rows() < LfEncoderParams::min_frames()) {
    throw TooShortError(fmt::format("encoder needs >= {} frames, got {}",
                                    LfEncoderParams::min_frames(), frames.rows()));
  }
  nn::mac_counter() += params.macs_per_window(static_cast<int>(frames.rows()));
  Mat cols1 = im2col(frames);
  Mat pre1 = cols1 * params.conv1_w.transpose();
  pre1.rowwise() += params.conv1_b.row(0);
  Mat cols2 = im2col(pre1.cwiseMax(0.0));
  Mat pre2 = cols2 * params.conv2_w.transpose();
  pre2.rowwise() += params.conv2_b.row(0);
  Vec out = pre2.cwiseMax(0.0).colwise().mean().transpose();
  if (cache != nullptr) {
    cache->cols1 = std::move(cols1);
    cache->pre1 = std::move(pre1);
    cache->cols2 = std::move(cols2);
    cache->pre2 = std::move(pre2);
  }
  return out;
}

Mat lf_encode(const LfEncoderParams& params, const Mat& frames, int frames_per_window) {
  if (frames_per_window < 1 || frames.rows() % frames_per_window != 0) {
    throw DimensionError(fmt::format("{} frames do not split into windows of {}",
                                     frames.rows(), frames_per_window));
  }
  const Eigen::Index n = frames.rows() / frames_per_window;
  Mat out(n, params.out_channels);
  for (Eigen::Index t = 0; t < n; ++t) {
    out.row(t) = lf_encode_window(params, frames.middleRows(t * frames_per_window, frames_per_window))
                     .transpose();
  }
  return out;
}

void lf_encode_backward(const LfEncoderParams& params, const LfEncoderCache& cache,
                        const Vec& d_out, LfEncoderParams& grads) {
  const Eigen::Index n2 = cache.pre2.rows();
  Mat d_pre2 = (cache.pre2.array() > 0.0)
                   .cast<double>()
                   .matrix()
                   .array()
                   .rowwise() * (d_out.transpose().array() / static_cast<double>(n2));
  grads.conv2_w.noalias() += d_pre2.transpose() * cache.cols2;
  grads.conv2_b += d_pre2.colwise().sum();
  Mat d_act1 = col2im(d_pre2 * params.conv2_w, params.out_channels);
  Mat d_pre1 = (cache.pre1.array() > 0.0).cast<double>() * d_act1.array();
  grads.conv1_w.noalias() += d_pre1.transpose() * cache.cols1;
  grads.conv1_b += d_pre1.colwise().sum();
}

}  // namespace pfd::dsp
