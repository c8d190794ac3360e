#pragma once

#include "pfd/adam.hpp"
#include "pfd/checkpoint.hpp"
#include "pfd/dsp.hpp"
#include "pfd/labels.hpp"
#include "pfd/model.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pfd::train {

struct Example {
  std::string id;
  dsp::FrameFeatures features;
  model::FrameLabels labels;
  std::vector<Span> spans;
};

// Features plus 10 ms frame labels (frames past the audio are padding).
Example make_example(const std::string& id, const dsp::Waveform& audio, std::vector<Span> spans,
                     const dsp::FeatureExtractor& extractor);

// Per-bin mean / standard deviation over the valid frames of a training set.
model::FeatureNorm fit_feature_norm(std::span<const Example> examples);

struct TrainConfig {
  int max_epochs = 60;
  int patience = 20;            // early stop after this many epochs without a better val loss
  int batch_size = 8;
  double grad_clip = 5.0;       // global L2 norm; 0 disables
  int plateau_patience = 5;     // halve the lr after this many stagnant epochs
  double plateau_factor = 0.5;
  double min_lr = 1e-7;
  model::GateMode mode = model::GateMode::StraightThrough;
  // Stream warm-up before gated training: first the LF stream alone (gate
  // forced off), then both streams on every window (the forced-on and
  // forced-off losses summed, so the shared LF encoder keeps serving the
  // coarse head). Each branch of the window loss only trains the stream it
  // selects, so without this the gate locks onto whichever stream happens to
  // be ahead. Warm-up epochs do not count towards early stopping or the lr
  // schedule.
  int lf_warmup_epochs = 0;
  int hf_warmup_epochs = 0;

  int warmup_epochs() const { return lf_warmup_epochs + hf_warmup_epochs; }
  model::GateMode mode_for_epoch(int epoch) const;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;       // mean L_t per window
  double val_loss = 0.0;         // hard gate, mean L_t per window
  double train_activation = 0.0; // sampled gate, training set
  double activation_rate = 0.0;  // hard gate, validation set
  double lr = 0.0;
  std::uint64_t seed = 0;
  double seconds = 0.0;
  bool improved = false;
};

struct EvalStats {
  double loss = 0.0;  // mean L_t per window
  double activation = 0.0;
  std::uint64_t windows = 0;
};

// Loss and activation over a set under a deterministic gate mode.
EvalStats evaluate(std::span<const Example> examples, const model::PfdParams& params,
                   const model::PfdConfig& config, model::GateMode mode = model::GateMode::Hard);

struct TrainerState {
  int epoch = 0;  // completed epochs
  double lr = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int since_lr_drop = 0;
  double lr_ref = std::numeric_limits<double>::infinity();
};

class Trainer {
 public:
  Trainer(model::PfdConfig config, TrainConfig train, model::PfdParams init);

  // One pass over train in a (seed, epoch)-shuffled order of minibatches,
  // then validation. Throws NumericError on a non-finite loss or gradient.
  EpochStats train_epoch(std::span<const Example> train, std::span<const Example> val);

  using EpochCallback = std::function<void(const EpochStats&, const Trainer&)>;
  // Epochs until max_epochs or early stopping; returns the per-epoch stats.
  std::vector<EpochStats> fit(std::span<const Example> train, std::span<const Example> val,
                              const EpochCallback& on_epoch = {});

  bool should_stop() const;
  const model::PfdParams& params() const { return params_; }
  const model::PfdParams& best_params() const { return best_; }
  const TrainerState& state() const { return state_; }
  const model::PfdConfig& config() const { return config_; }

  // Full resumable state: params, best params, Adam moments, counters.
  nn::Checkpoint checkpoint(const std::string& digest) const;
  void restore(const nn::Checkpoint& ckpt);

 private:
  model::PfdConfig config_;
  TrainConfig train_;
  model::PfdParams params_;
  model::PfdParams best_;
  nn::AdamState adam_;
  TrainerState state_;
};

// Params (with feature normalization) as a checkpoint, and back.
nn::Checkpoint params_checkpoint(const model::PfdParams& params, const std::string& digest);
model::PfdParams params_from_checkpoint(const nn::Checkpoint& ckpt, const model::PfdConfig& config);

}  // namespace pfd::train
