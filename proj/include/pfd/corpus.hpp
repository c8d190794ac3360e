#pragma once

#include "pfd/dsp.hpp"
#include "pfd/edit.hpp"
#include "pfd/labels.hpp"
#include "pfd/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pfd::corpus {

struct SpeakerSpec {
  double f0 = 140.0;             // Hz
  double rolloff = 1.2;          // harmonic k has amplitude k^-rolloff
  double noise_floor = 0.002;    // std of the background noise
  double token_min = 0.20;       // seconds
  double token_max = 0.40;
  std::uint64_t seed = 0;

  // Throws ParameterError unless f0 > 0 and 0 < token_min <= token_max.
  void validate() const;
};

SpeakerSpec random_speaker(std::uint64_t seed);

inline constexpr double kPadSeconds = 0.10;  // silence before the first and after the last token
inline constexpr double kMinGap = 0.05;
inline constexpr double kMaxGap = 0.15;

// Stable 64-bit FNV-1a, used to derive per-token parameters from the text.
std::uint64_t text_hash(std::string_view text);
// Token pitch is f0 times this factor, in [0.8, 1.25).
double token_f0_factor(std::string_view text);

const std::vector<std::string>& vocabulary();

struct Utterance {
  dsp::Waveform audio;
  edit::Transcript transcript;
};

// Harmonic bursts (random phases, slight vibrato, raised-cosine envelope)
// separated by silences, all over the speaker's noise floor. Token times are
// exact sample positions.
Utterance generate_utterance(const SpeakerSpec& spec, int n_tokens, Rng& rng);

// Same tokens as given; lets callers pick the words and durations.
Utterance render_tokens(const SpeakerSpec& spec, const std::vector<std::string>& words,
                        const std::vector<double>& durations, const std::vector<double>& gaps,
                        Rng& rng);

// The stand-in for a TTS voice: phase-locked harmonics without vibrato over
// a noise floor raised by noise_delta. Duration is drawn from the speaker's
// token range.
dsp::Waveform synth_proxy(const SpeakerSpec& spec, std::string_view text, double noise_delta,
                          Rng& rng);

// Synthesizer backend around synth_proxy; its random stream is derived from
// (seed, text) so repeated calls agree.
class ProxySynthesizer final : public edit::Synthesizer {
 public:
  ProxySynthesizer(SpeakerSpec spec, double noise_delta, std::uint64_t seed)
      : spec_(spec), noise_delta_(noise_delta), seed_(seed) {}
  dsp::Waveform synthesize(const dsp::Waveform& x, const Span& target,
                           const std::string& text) const override;

 private:
  SpeakerSpec spec_;
  double noise_delta_;
  std::uint64_t seed_;
};

// Mean over frames of geometric/arithmetic mean of the power spectrum.
double spectral_flatness(const dsp::Waveform& x, int fft_size = 512);

// ---- dataset ------------------------------------------------------------

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DatasetConfig {
  int n_utterances = 2000;
  double fake_fraction = 0.5;
  std::array<double, 3> mode_weights{1.0, 1.0, 1.0};  // inversion, insertion, deletion
  int n_speakers = 40;
  int min_tokens = 4;
  int max_tokens = 10;
  double min_seconds = 2.0;
  double max_seconds = 5.0;
  double proxy_noise_delta = 0.02;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  int crossfade_samples = 160;
  std::uint64_t seed = 0;
  std::string digest;  // config digest stamped on every record

  void validate() const;
};

struct UtteranceRecord {
  std::string id;
  std::string wav;         // path relative to the manifest directory
  std::string source_wav;  // unedited source, fakes only
  edit::Transcript transcript;
  std::vector<Span> fake_spans;
  Split split = Split::Train;
  int speaker = 0;
  std::optional<edit::EditPlan> plan;
  std::string config_digest;

  bool is_fake() const { return plan.has_value(); }
};

struct Corpus {
  std::vector<UtteranceRecord> records;
  std::vector<dsp::Waveform> audio;
  std::vector<std::optional<dsp::Waveform>> sources;
};

// Whole corpus in memory. Speakers are split disjointly across train / val /
// test; each utterance is manipulated with probability fake_fraction, one
// edit each, mode drawn from mode_weights.
Corpus generate_corpus(const DatasetConfig& config);

// generate_corpus plus WAVs, manifest.jsonl and edit_plans.jsonl under
// out_dir. Throws IoError if the directory cannot be written.
Corpus make_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

void write_manifest(const std::vector<UtteranceRecord>& records, const std::filesystem::path& path);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);
void write_edit_plans(const std::vector<UtteranceRecord>& records, const std::filesystem::path& path);

// 10 ms frame labels for a record of the given duration.
std::vector<std::uint8_t> record_frame_labels(const UtteranceRecord& r, std::size_t n_frames,
                                              double hop_seconds = 0.01);

// Brute-force labels: frames overlapping the samples between the longest
// common prefix and longest common suffix of source and edited audio.
std::vector<std::uint8_t> diff_frame_labels(const dsp::Waveform& source, const dsp::Waveform& edited,
                                            int hop_samples = 160);

}  // namespace pfd::corpus
