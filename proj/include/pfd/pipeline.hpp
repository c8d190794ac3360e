#pragma once

#include "pfd/corpus.hpp"
#include "pfd/evaluation.hpp"
#include "pfd/model.hpp"
#include "pfd/trainer.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace pfd::pipeline {

// Training examples for one split (all splits when `split` is empty).
std::vector<train::Example> examples_from_corpus(const corpus::Corpus& corpus,
                                                 std::optional<corpus::Split> split,
                                                 const dsp::FeatureExtractor& extractor);

// Same, reading the WAVs listed in a manifest (paths relative to its directory).
std::vector<train::Example> load_examples(const std::filesystem::path& manifest,
                                          std::optional<corpus::Split> split,
                                          const dsp::FeatureExtractor& extractor);

// Detection on one example, with its ground truth restricted to valid frames.
eval::UtteranceResult score_example(const train::Example& ex, const model::PfdParams& params,
                                    const model::PfdConfig& config, model::GateMode mode,
                                    double threshold = 0.5);

std::vector<eval::UtteranceResult> score_examples(const std::vector<train::Example>& examples,
                                                  const model::PfdParams& params,
                                                  const model::PfdConfig& config, model::GateMode mode,
                                                  double threshold = 0.5);

}  // namespace pfd::pipeline
