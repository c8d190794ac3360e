#pragma once

#include "pfd/tensor.hpp"

namespace pfd::dsp {

// Coarse-window encoder: two valid 1-D convolutions (kernel 3) over the
// window's mel frames, each followed by ReLU, then a mean over time.
struct LfEncoderParams {
  static constexpr int kKernel = 3;

  int in_channels = 0;
  int out_channels = 0;
  Mat conv1_w;  // [d x 3*in]
  Mat conv1_b;  // [1 x d]
  Mat conv2_w;  // [d x 3*d]
  Mat conv2_b;  // [1 x d]

  static LfEncoderParams zeros(int in_channels, int out_channels);
  static LfEncoderParams random(int in_channels, int out_channels, Rng& rng);

  // Smallest window the two valid convolutions accept.
  static constexpr int min_frames() { return 2 * (kKernel - 1) + 1; }
  std::uint64_t macs_per_window(int frames) const;
};

struct LfEncoderCache {
  Mat cols1;  // [(F-2) x 3*in]
  Mat pre1;   // [(F-2) x d]
  Mat cols2;  // [(F-4) x 3*d]
  Mat pre2;   // [(F-4) x d]
};

// frames: [F x in_channels] -> u_lf of size out_channels.
Vec lf_encode_window(const LfEncoderParams& params, const Mat& frames,
                     LfEncoderCache* cache = nullptr);

// One vector per coarse window of frames_per_window rows: [T x d].
Mat lf_encode(const LfEncoderParams& params, const Mat& frames, int frames_per_window);

// Accumulates parameter gradients for d loss / d u_lf.
void lf_encode_backward(const LfEncoderParams& params, const LfEncoderCache& cache,
                        const Vec& d_out, LfEncoderParams& grads);

}  // namespace pfd::dsp
