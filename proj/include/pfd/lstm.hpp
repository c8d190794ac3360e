#pragma once

#include "pfd/tensor.hpp"

#include <vector>

namespace pfd::nn {

// One LSTM layer. Gate blocks are stacked in the order input, forget, cell,
// output along the 4H rows of the weight matrices.
struct LstmLayer {
  Mat w_ih;  // [4H x in]
  Mat w_hh;  // [4H x H]
  Mat bias;  // [1 x 4H]
};

struct LstmParams {
  int input_size = 0;
  int hidden = 0;
  std::vector<LstmLayer> layers;

  static LstmParams zeros(int input_size, int hidden, int n_layers);
  // uniform(+-1/sqrt(fan_in)) weights, forget-gate bias +1.
  static LstmParams random(int input_size, int hidden, int n_layers, Rng& rng);

  int layer_count() const { return static_cast<int>(layers.size()); }
  int layer_input(int l) const { return l == 0 ? input_size : hidden; }
  // Multiply-accumulates of one time step through the whole stack.
  std::uint64_t macs_per_step() const;
  void set_zero();
};

// Per-layer hidden and cell state.
struct LstmState {
  std::vector<Vec> h;
  std::vector<Vec> c;

  static LstmState zeros(int n_layers, int hidden);
  const Vec& top() const { return h.back(); }
};

struct LstmLayerCache {
  Mat input;      // [T x in]
  Mat gates;      // [T x 4H] post-activation i, f, g, o
  Mat cell;       // [T x H]
  Mat tanh_cell;  // [T x H]
  Mat hidden;     // [T x H]
  Vec h0;
  Vec c0;
};

struct LstmCache {
  const LstmParams* params = nullptr;
  int steps = 0;
  std::vector<LstmLayerCache> layers;
};

struct LstmOutput {
  Mat hidden;  // [T x H], top layer
  LstmState final_state;
  LstmCache cache;
};

// Runs the stack over inputs [T x input_size]. With T = 0 the final state is
// the initial state. keep_cache = false skips the activation cache
// (inference only).
LstmOutput lstm_forward(const LstmParams& params, const Mat& inputs,
                        const LstmState& init, bool keep_cache = true);

struct LstmGradients {
  Mat d_inputs;  // [T x input_size]
  LstmState d_init;
};

// Exact BPTT through a cached forward pass. d_hidden is the gradient w.r.t.
// the top-layer outputs, d_final the gradient w.r.t. the final state of every
// layer. Parameter gradients are accumulated into grads (same shapes as
// params). Throws ContractError if the cache was not produced from params.
LstmGradients lstm_backward(const LstmParams& params, const LstmCache& cache,
                            const Mat& d_hidden, const LstmState& d_final,
                            LstmParams& grads);

}  // namespace pfd::nn
