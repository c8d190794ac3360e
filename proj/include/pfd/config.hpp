#pragma once

#include "pfd/corpus.hpp"
#include "pfd/dsp.hpp"
#include "pfd/model.hpp"
#include "pfd/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pfd::config {

inline constexpr std::string_view kEnvPrefix = "PFD_";

// Everything a command needs, as flat `key = value` entries. Resolution
// order: built-in defaults, then the config file, then PFD_<KEY> environment
// variables, then command-line flags.
struct RunConfig {
  model::PfdConfig model;
  dsp::FrontEndConfig frontend;
  train::TrainConfig train;
  corpus::DatasetConfig corpus;
  std::uint64_t seed = 0;
  model::GateMode gate_mode = model::GateMode::Hard;  // inference gate
  double detect_threshold = 0.5;
  int bench_repeats = 5;

  RunConfig();

  // ParameterError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Propagates the seed and the shared front-end sizes into the sub-configs
  // and validates every part.
  void resolve();

  // Canonical `key = value` text of every key, sorted.
  std::string to_text() const;
  // SHA-256 over the model and front-end keys: what a checkpoint depends on.
  std::string model_digest() const;
  // SHA-256 over the corpus keys and the seed: what a manifest depends on.
  std::string corpus_digest() const;
};

// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
// keys are errors.
void apply_text(RunConfig& config, std::string_view text, const std::string& origin = "<text>");
void apply_file(RunConfig& config, const std::filesystem::path& path);
// Applies every PFD_<KEY> variable that is set; returns the keys applied.
std::vector<std::string> apply_env(RunConfig& config);

std::string sha256_hex(std::string_view data);

}  // namespace pfd::config
