#include "pfd/trainer.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace pfd::train {

Example make_example(const std::string& id, const dsp::Waveform& audio, std::vector<Span> spans,
                     const dsp::FeatureExtractor& extractor) {
  Example ex;
  ex.id = id;
  ex.features = extractor.extract(audio);
  const double hop = static_cast<double>(extractor.config().hop_samples) / extractor.config().sample_rate;
  ex.labels.fine = frame_labels_from_spans(spans, ex.features.valid.size(), hop);
  ex.spans = std::move(spans);
  return ex;
}

namespace {

void accumulate_moments(const Mat& x, std::span<const std::uint8_t> valid, Eigen::VectorXd& sum,
                        Eigen::VectorXd& sq, double& n) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!valid[r]) continue;
    sum += x.row(r).transpose();
    sq += x.row(r).transpose().cwiseAbs2();
    n += 1.0;
  }
}

void finish_moments(const Eigen::VectorXd& sum, const Eigen::VectorXd& sq, double n, Mat& mean,
                    Mat& scale) {
  mean = (sum / n).transpose();
  const Eigen::VectorXd var = (sq / n - (sum / n).cwiseAbs2()).cwiseMax(0.0);
  scale = var.cwiseSqrt().cwiseMax(1e-3).transpose();
}

}  // namespace

model::FeatureNorm fit_feature_norm(std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("cannot fit a normalizer on an empty set");
  const Eigen::Index lf = examples[0].features.lf_mel.cols();
  const Eigen::Index hf = examples[0].features.hf.cols();
  Eigen::VectorXd lf_sum = Eigen::VectorXd::Zero(lf), lf_sq = lf_sum;
  Eigen::VectorXd hf_sum = Eigen::VectorXd::Zero(hf), hf_sq = hf_sum;
  double n_lf = 0.0, n_hf = 0.0;
  for (const Example& ex : examples) {
    accumulate_moments(ex.features.lf_mel, ex.features.valid, lf_sum, lf_sq, n_lf);
    accumulate_moments(ex.features.hf, ex.features.valid, hf_sum, hf_sq, n_hf);
  }
  if (n_lf == 0.0) throw ContractError("no valid frames to fit a normalizer");
  model::FeatureNorm norm;
  finish_moments(lf_sum, lf_sq, n_lf, norm.lf_mean, norm.lf_scale);
  finish_moments(hf_sum, hf_sq, n_hf, norm.hf_mean, norm.hf_scale);
  return norm;
}

void TrainConfig::validate() const {
  if (max_epochs < 0) throw ParameterError("max_epochs must be >= 0");
  if (patience < 1) throw ParameterError("patience must be >= 1");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (!(grad_clip >= 0.0)) throw ParameterError("grad_clip must be >= 0");
  if (plateau_patience < 1) throw ParameterError("plateau_patience must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor <= 1.0)) throw ParameterError("plateau_factor must be in (0, 1]");
  if (mode == model::GateMode::Hard) throw ParameterError("training needs a differentiable gate mode");
  if (lf_warmup_epochs < 0 || hf_warmup_epochs < 0) throw ParameterError("warm-up epochs must be >= 0");
}

model::GateMode TrainConfig::mode_for_epoch(int epoch) const {
  if (epoch <= lf_warmup_epochs) return model::GateMode::ForceOff;
  if (epoch <= warmup_epochs()) return model::GateMode::ForceOn;
  return mode;
}

EvalStats evaluate(std::span<const Example> examples, const model::PfdParams& params,
                   const model::PfdConfig& config, model::GateMode mode) {
  EvalStats s;
  double loss = 0.0;
  std::uint64_t active = 0;
  for (const Example& ex : examples) {
    model::ForwardOptions opts;
    opts.mode = mode;
    opts.labels = &ex.labels;
    opts.keep_cache = false;
    const model::ForwardPass pass = model::forward_utterance(ex.features, params, config, opts);
    loss += pass.loss;
    s.windows += pass.windows.size();
    active += static_cast<std::uint64_t>(pass.active_windows());
  }
  if (s.windows > 0) {
    s.loss = loss / static_cast<double>(s.windows);
    s.activation = static_cast<double>(active) / static_cast<double>(s.windows);
  }
  return s;
}

Trainer::Trainer(model::PfdConfig config, TrainConfig train, model::PfdParams init)
    : config_(config), train_(train), params_(std::move(init)), best_(params_) {
  config_.validate();
  train_.validate();
  nn::AdamConfig ac;
  ac.lr = config_.lr;
  adam_ = nn::AdamState::like(params_.trainable(), ac);
  state_.lr = config_.lr;
}

namespace {

double grad_norm(const std::vector<Mat*>& grads) {
  double sq = 0.0;
  for (const Mat* g : grads) sq += g->squaredNorm();
  return std::sqrt(sq);
}

[[noreturn]] void non_finite(const Example& ex, const model::ForwardPass& pass, int epoch) {
  std::string trace;
  for (const auto& w : pass.windows) {
    trace += fmt::format(" [t={} logits=({:.4g},{:.4g}) G=({:.3g},{:.3g}) coarse={:.4g} L={:.4g}]", w.index,
                         w.gate.logits[0], w.gate.logits[1], w.weights[0], w.weights[1], w.coarse, w.loss);
  }
  throw NumericError(fmt::format("non-finite loss in epoch {} on '{}':{}", epoch, ex.id, trace));
}

}  // namespace

EpochStats Trainer::train_epoch(std::span<const Example> train, std::span<const Example> val) {
  if (train.empty()) throw ContractError("training set is empty");
  const auto t0 = std::chrono::steady_clock::now();
  const int epoch = state_.epoch + 1;
  const model::GateMode mode = train_.mode_for_epoch(epoch);
  const bool joint = epoch > train_.lf_warmup_epochs && epoch <= train_.warmup_epochs();
  Rng rng = derive_rng({config_.seed, static_cast<std::uint64_t>(epoch)});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  model::PfdParams grads = model::PfdParams::zeros(config_);
  std::vector<Mat*> g_list = grads.trainable();
  std::vector<Mat*> p_list = params_.trainable();
  std::vector<const Mat*> g_const(g_list.begin(), g_list.end());

  double loss_sum = 0.0;
  std::uint64_t windows = 0, active = 0;
  for (std::size_t b = 0; b < order.size(); b += train_.batch_size) {
    const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(train_.batch_size));
    std::uint64_t batch_windows = 0;
    for (std::size_t i = b; i < e; ++i) batch_windows += train[order[i]].features.n_windows;
    const double scale = 1.0 / static_cast<double>(batch_windows);
    grads.set_zero();
    for (std::size_t i = b; i < e; ++i) {
      const Example& ex = train[order[i]];
      model::ForwardOptions opts;
      opts.mode = mode;
      opts.rng = &rng;
      opts.labels = &ex.labels;
      const model::ForwardPass pass = model::forward_utterance(ex.features, params_, config_, opts);
      if (!std::isfinite(pass.loss)) non_finite(ex, pass, epoch);
      model::backward_utterance(pass, ex.features, ex.labels, params_, config_, grads, scale);
      loss_sum += pass.loss;
      if (joint) {
        opts.mode = model::GateMode::ForceOff;
        const model::ForwardPass off = model::forward_utterance(ex.features, params_, config_, opts);
        if (!std::isfinite(off.loss)) non_finite(ex, off, epoch);
        model::backward_utterance(off, ex.features, ex.labels, params_, config_, grads, scale);
        loss_sum += off.loss;
      }
      windows += pass.windows.size();
      for (const auto& w : pass.windows) active += w.gate.hard == gating::kHfOn ? 1 : 0;
    }
    const double norm = grad_norm(g_list);
    if (!std::isfinite(norm)) throw NumericError(fmt::format("non-finite gradient in epoch {}", epoch));
    if (train_.grad_clip > 0.0 && norm > train_.grad_clip) {
      for (Mat* g : g_list) *g *= train_.grad_clip / norm;
    }
    adam_.config.lr = state_.lr;
    nn::adam_step(adam_, p_list, g_const);
  }

  const bool forced = mode == model::GateMode::ForceOn || mode == model::GateMode::ForceOff;
  const EvalStats v = evaluate(val.empty() ? train : val, params_, config_, forced ? mode : model::GateMode::Hard);
  EpochStats s;
  s.epoch = epoch;
  s.train_loss = loss_sum / static_cast<double>(windows);
  s.val_loss = v.loss;
  s.train_activation = static_cast<double>(active) / static_cast<double>(windows);
  s.activation_rate = v.activation;
  s.lr = state_.lr;
  s.seed = config_.seed;

  state_.epoch = epoch;
  if (epoch <= train_.warmup_epochs()) {
    best_ = params_;
  } else {
    if (v.loss < state_.best_val) {
      state_.best_val = v.loss;
      state_.since_best = 0;
      best_ = params_;
      s.improved = true;
    } else {
      ++state_.since_best;
    }
    if (v.loss < state_.lr_ref) {
      state_.lr_ref = v.loss;
      state_.since_lr_drop = 0;
    } else if (++state_.since_lr_drop >= train_.plateau_patience) {
      state_.lr = std::max(train_.min_lr, state_.lr * train_.plateau_factor);
      state_.since_lr_drop = 0;
    }
  }
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

bool Trainer::should_stop() const {
  return state_.epoch >= train_.warmup_epochs() + train_.max_epochs || state_.since_best >= train_.patience;
}

std::vector<EpochStats> Trainer::fit(std::span<const Example> train, std::span<const Example> val,
                                     const EpochCallback& on_epoch) {
  std::vector<EpochStats> out;
  while (!should_stop()) {
    out.push_back(train_epoch(train, val));
    const EpochStats& s = out.back();
    spdlog::debug("epoch {} train {:.4f} val {:.4f} p_train {:.3f} p_val {:.3f} lr {:.2g} ({:.1f}s)", s.epoch,
                  s.train_loss, s.val_loss, s.train_activation, s.activation_rate, s.lr, s.seconds);
    if (on_epoch) on_epoch(s, *this);
  }
  return out;
}

nn::Checkpoint params_checkpoint(const model::PfdParams& params, const std::string& digest) {
  nn::Checkpoint c;
  c.config_digest = digest;
  for (const auto& [name, m] : params.all_named()) c.tensors.push_back({name, *m});
  return c;
}

model::PfdParams params_from_checkpoint(const nn::Checkpoint& ckpt, const model::PfdConfig& config) {
  model::PfdParams p = model::PfdParams::zeros(config);
  for (auto& [name, m] : p.all_named()) ckpt.copy_into(name, *m);
  return p;
}

nn::Checkpoint Trainer::checkpoint(const std::string& digest) const {
  nn::Checkpoint c = params_checkpoint(params_, digest);
  for (const auto& [name, m] : best_.all_named()) c.tensors.push_back({"best." + name, *m});
  const auto names = params_.trainable_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    c.tensors.push_back({"adam.m." + names[i], adam_.m[i]});
    c.tensors.push_back({"adam.v." + names[i], adam_.v[i]});
  }
  Mat st(1, 7);
  st << state_.epoch, state_.lr, state_.best_val, state_.since_best, state_.since_lr_drop, state_.lr_ref,
      static_cast<double>(adam_.step);
  c.tensors.push_back({"trainer.state", st});
  return c;
}

void Trainer::restore(const nn::Checkpoint& ckpt) {
  for (auto& [name, m] : params_.all_named()) ckpt.copy_into(name, *m);
  for (auto& [name, m] : best_.all_named()) ckpt.copy_into("best." + name, *m);
  const auto names = params_.trainable_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    ckpt.copy_into("adam.m." + names[i], adam_.m[i]);
    ckpt.copy_into("adam.v." + names[i], adam_.v[i]);
  }
  Mat st(1, 7);
  ckpt.copy_into("trainer.state", st);
  state_.epoch = static_cast<int>(st(0, 0));
  state_.lr = st(0, 1);
  state_.best_val = st(0, 2);
  state_.since_best = static_cast<int>(st(0, 3));
  state_.since_lr_drop = static_cast<int>(st(0, 4));
  state_.lr_ref = st(0, 5);
  adam_.step = static_cast<long>(st(0, 6));
}

}  // namespace pfd::train
