#include "pfd/pipeline.hpp"

#include "pfd/error.hpp"
#include "pfd/wav_io.hpp"

namespace pfd::pipeline {

std::vector<train::Example> examples_from_corpus(const corpus::Corpus& corpus,
                                                 std::optional<corpus::Split> split,
                                                 const dsp::FeatureExtractor& extractor) {
  std::vector<train::Example> out;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    if (split && r.split != *split) continue;
    out.push_back(train::make_example(r.id, corpus.audio[i], r.fake_spans, extractor));
  }
  return out;
}

std::vector<train::Example> load_examples(const std::filesystem::path& manifest,
                                          std::optional<corpus::Split> split,
                                          const dsp::FeatureExtractor& extractor) {
  const auto records = corpus::read_manifest(manifest);
  const auto dir = manifest.parent_path();
  std::vector<train::Example> out;
  for (const auto& r : records) {
    if (split && r.split != *split) continue;
    const dsp::Waveform x = dsp::read_wav(dir / r.wav, extractor.config().sample_rate);
    out.push_back(train::make_example(r.id, x, r.fake_spans, extractor));
  }
  return out;
}

eval::UtteranceResult score_example(const train::Example& ex, const model::PfdParams& params,
                                    const model::PfdConfig& config, model::GateMode mode, double threshold) {
  const model::Detection d = model::detect(ex.features, params, config, mode);
  eval::UtteranceResult r;
  r.id = ex.id;
  r.scores = d.frames.scores;
  for (std::size_t i = 0; i < ex.features.valid.size(); ++i) {
    if (ex.features.valid[i]) r.labels.push_back(ex.labels.fine[i]);
  }
  if (r.labels.size() != r.scores.size()) throw ContractError("score and label frames disagree");
  const double hop = d.frames.timestamps.size() > 1 ? d.frames.timestamps[1] - d.frames.timestamps[0] : 0.01;
  r.predicted = spans_from_scores(r.scores, hop, threshold);
  r.truth = ex.spans;
  r.gate = d.gate;
  return r;
}

std::vector<eval::UtteranceResult> score_examples(const std::vector<train::Example>& examples,
                                                  const model::PfdParams& params,
                                                  const model::PfdConfig& config, model::GateMode mode,
                                                  double threshold) {
  std::vector<eval::UtteranceResult> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(score_example(ex, params, config, mode, threshold));
  return out;
}

}  // namespace pfd::pipeline
