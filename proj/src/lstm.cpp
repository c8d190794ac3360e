#include "pfd/lstm.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pfd::nn {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

LstmParams LstmParams::zeros(int input_size, int hidden, int n_layers) {
  if (input_size < 1 || hidden < 1 || n_layers < 0) {
    throw ParameterError(fmt::format("bad LSTM shape in={} hidden={} layers={}",
                                     input_size, hidden, n_layers));
  }
  LstmParams p;
  p.input_size = input_size;
  p.hidden = hidden;
  p.layers.resize(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    p.layers[l].w_ih = Mat::Zero(4 * hidden, p.layer_input(l));
    p.layers[l].w_hh = Mat::Zero(4 * hidden, hidden);
    p.layers[l].bias = Mat::Zero(1, 4 * hidden);
  }
  return p;
}

LstmParams LstmParams::random(int input_size, int hidden, int n_layers, Rng& rng) {
  LstmParams p = zeros(input_size, hidden, n_layers);
  for (int l = 0; l < n_layers; ++l) {
    auto& layer = p.layers[l];
    const int fan_in = p.layer_input(l) + hidden;
    init_uniform(layer.w_ih, fan_in, rng);
    init_uniform(layer.w_hh, fan_in, rng);
    init_uniform(layer.bias, fan_in, rng);
    layer.bias.block(0, hidden, 1, hidden).setConstant(1.0);
  }
  return p;
}

std::uint64_t LstmParams::macs_per_step() const {
  std::uint64_t total = 0;
  for (int l = 0; l < layer_count(); ++l) {
    total += 4ull * hidden * (layer_input(l) + hidden);
  }
  return total;
}

void LstmParams::set_zero() {
  for (auto& layer : layers) {
    layer.w_ih.setZero();
    layer.w_hh.setZero();
    layer.bias.setZero();
  }
}

LstmState LstmState::zeros(int n_layers, int hidden) {
  LstmState s;
  s.h.assign(n_layers, Vec::Zero(hidden));
  s.c.assign(n_layers, Vec::Zero(hidden));
  return s;
}

LstmOutput lstm_forward(const LstmParams& params, const Mat& inputs,
                        const LstmState& init, bool keep_cache) {
  const int H = params.hidden;
  const int L = params.layer_count();
  const int T = static_cast<int>(inputs.rows());
  if (inputs.cols() != params.input_size) {
    throw DimensionError(fmt::format("LSTM input width {} != expected {}",
                                     inputs.cols(), params.input_size));
  }
  if (static_cast<int>(init.h.size()) != L || static_cast<int>(init.c.size()) != L) {
    throw DimensionError("initial state layer count mismatch");
  }

  LstmOutput out;
  out.final_state = init;
  out.cache.params = &params;
  out.cache.steps = T;
  if (keep_cache) out.cache.layers.resize(L);
  if (T == 0) {
    out.hidden = Mat(0, H);
    return out;
  }
  mac_counter() += static_cast<std::uint64_t>(T) * params.macs_per_step();

  Mat layer_in = inputs;
  for (int l = 0; l < L; ++l) {
    const LstmLayer& w = params.layers[l];
    if (init.h[l].size() != H || init.c[l].size() != H) {
      throw DimensionError("initial state width mismatch");
    }
    Mat zx = layer_in * w.w_ih.transpose();
    zx.rowwise() += w.bias.row(0);

    Mat gates(T, 4 * H), cell(T, H), tanh_cell(T, H), hidden(T, H);
    Vec h = init.h[l];
    Vec c = init.c[l];
    Vec z(4 * H);
    for (int t = 0; t < T; ++t) {
      z.noalias() = w.w_hh * h;
      z += zx.row(t).transpose();
      for (int j = 0; j < H; ++j) {
        const double i_g = sigmoid(z[j]);
        const double f_g = sigmoid(z[H + j]);
        const double g_g = std::tanh(z[2 * H + j]);
        const double o_g = sigmoid(z[3 * H + j]);
        c[j] = f_g * c[j] + i_g * g_g;
        const double tc = std::tanh(c[j]);
        h[j] = o_g * tc;
        gates(t, j) = i_g;
        gates(t, H + j) = f_g;
        gates(t, 2 * H + j) = g_g;
        gates(t, 3 * H + j) = o_g;
        cell(t, j) = c[j];
        tanh_cell(t, j) = tc;
        hidden(t, j) = h[j];
      }
    }
    out.final_state.h[l] = h;
    out.final_state.c[l] = c;
    if (keep_cache) {
      auto& lc = out.cache.layers[l];
      lc.input = std::move(layer_in);
      lc.gates = std::move(gates);
      lc.cell = std::move(cell);
      lc.tanh_cell = std::move(tanh_cell);
      lc.h0 = init.h[l];
      lc.c0 = init.c[l];
      lc.hidden = hidden;
    }
    layer_in = std::move(hidden);
  }
  out.hidden = std::move(layer_in);
  return out;
}

LstmGradients lstm_backward(const LstmParams& params, const LstmCache& cache,
                            const Mat& d_hidden, const LstmState& d_final,
                            LstmParams& grads) {
  const int H = params.hidden;
  const int L = params.layer_count();
  const int T = cache.steps;
  if (cache.params != &params) {
    throw ContractError("LSTM cache was produced by a different parameter set");
  }
  if (T > 0 && static_cast<int>(cache.layers.size()) != L) {
    throw ContractError("LSTM cache is missing activations (forward ran without cache)");
  }
  if (d_hidden.rows() != T || (T > 0 && d_hidden.cols() != H)) {
    throw DimensionError(fmt::format("upstream gradient is {}x{}, expected {}x{}",
                                     d_hidden.rows(), d_hidden.cols(), T, H));
  }
  if (static_cast<int>(d_final.h.size()) != L || static_cast<int>(d_final.c.size()) != L) {
    throw DimensionError("final-state gradient layer count mismatch");
  }
  if (grads.layer_count() != L || grads.hidden != H || grads.input_size != params.input_size) {
    throw DimensionError("gradient container shape mismatch");
  }

  LstmGradients out;
  out.d_init = d_final;
  if (T == 0) {
    out.d_inputs = Mat(0, params.input_size);
    return out;
  }

  Mat d_out = d_hidden;
  for (int l = L - 1; l >= 0; --l) {
    const LstmLayer& w = params.layers[l];
    const LstmLayerCache& lc = cache.layers[l];
    Mat dz(T, 4 * H);
    Vec dh = d_final.h[l];
    Vec dc = d_final.c[l];
    Vec dh_t(H);
    Vec dz_t(4 * H);
    for (int t = T - 1; t >= 0; --t) {
      dh_t = dh + d_out.row(t).transpose();
      for (int j = 0; j < H; ++j) {
        const double i_g = lc.gates(t, j);
        const double f_g = lc.gates(t, H + j);
        const double g_g = lc.gates(t, 2 * H + j);
        const double o_g = lc.gates(t, 3 * H + j);
        const double tc = lc.tanh_cell(t, j);
        const double c_prev = t > 0 ? lc.cell(t - 1, j) : lc.c0[j];
        const double d_o = dh_t[j] * tc;
        const double dc_t = dc[j] + dh_t[j] * o_g * (1.0 - tc * tc);
        dz_t[j] = dc_t * g_g * i_g * (1.0 - i_g);
        dz_t[H + j] = dc_t * c_prev * f_g * (1.0 - f_g);
        dz_t[2 * H + j] = dc_t * i_g * (1.0 - g_g * g_g);
        dz_t[3 * H + j] = d_o * o_g * (1.0 - o_g);
        dc[j] = dc_t * f_g;
      }
      dz.row(t) = dz_t.transpose();
      dh.noalias() = w.w_hh.transpose() * dz_t;
    }
    out.d_init.h[l] = dh;
    out.d_init.c[l] = dc;

    LstmLayer& g = grads.layers[l];
    g.w_ih.noalias() += dz.transpose() * lc.input;
    Mat h_prev(T, H);
    h_prev.row(0) = lc.h0.transpose();
    if (T > 1) h_prev.bottomRows(T - 1) = lc.hidden.topRows(T - 1);
    g.w_hh.noalias() += dz.transpose() * h_prev;
    g.bias += dz.colwise().sum();
    d_out = dz * w.w_ih;
  }
  out.d_inputs = std::move(d_out);
  return out;
}

}  // namespace pfd::nn
