#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace pfd {

// Row-major so that one row is one time step / one frame.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

using Rng = std::mt19937_64;

// Independent stream keyed by a tuple of integers (seed, epoch, index, ...).
inline Rng derive_rng(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

namespace nn {

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
void init_uniform(Mat& m, int fan_in, Rng& rng);

bool all_finite(const Mat& m);

// Multiply-accumulates of the forward matrix products executed on this
// thread. Elementwise work and backward passes are not counted.
std::uint64_t& mac_counter();

struct MacScope {
  std::uint64_t start = mac_counter();
  std::uint64_t elapsed() const { return mac_counter() - start; }
};

}  // namespace nn
}  // namespace pfd
