#pragma once

#include "pfd/dsp.hpp"
#include "pfd/labels.hpp"

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace pfd::edit {

struct Token {
  std::string text;
  double start = 0.0;  // seconds
  double end = 0.0;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Transcript {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  // 0 <= start < end for every token; tokens time-ordered and
  // non-overlapping. Throws ContractError.
  void validate() const;
  friend bool operator==(const Transcript&, const Transcript&) = default;
};

enum class EditMode { Inversion, Insertion, Deletion };

std::string to_string(EditMode mode);
EditMode edit_mode_from_string(const std::string& s);

struct EditPlan {
  EditMode mode = EditMode::Inversion;
  std::size_t target = 0;  // index of w*
  std::string text;        // w' (Inversion) or w-dagger (Insertion); empty for Deletion

  // Throws ContractError for an empty transcript or out-of-range target,
  // ParameterError for text that does not fit the mode.
  void validate(const Transcript& w) const;
};

// Start time of an Insertion: the midpoint of the silence before w* (or of
// [0, start of w*] for the first token).
double insertion_point(const Transcript& w, std::size_t target);

// w-bar = (w minus w*) joined with f_i(w*). synth_duration is the length of the
// synthesized token in seconds; negative keeps the target token's own
// duration. Inversion replaces the text in place, Insertion adds w-dagger
// before w*, Deletion drops w*. Downstream tokens shift by the change in
// length.
Transcript build_manipulated_transcript(const Transcript& w, const EditPlan& plan,
                                        double synth_duration = -1.0);

// ---- backend contracts --------------------------------------------------

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual Transcript transcribe(const std::string& utterance_id, const dsp::Waveform& x) const = 0;
};

class TargetSelector {
 public:
  virtual ~TargetSelector() = default;
  virtual std::size_t select(const Transcript& w) const = 0;
};

class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  // Renders `text` for insertion into x; `target` is the time span of the
  // token being replaced (or the insertion point, zero length).
  virtual dsp::Waveform synthesize(const dsp::Waveform& x, const Span& target,
                                   const std::string& text) const = 0;
};

// Reads ground-truth transcripts registered by utterance id.
class ManifestTranscriber final : public Transcriber {
 public:
  void add(const std::string& utterance_id, Transcript w);
  Transcript transcribe(const std::string& utterance_id, const dsp::Waveform& x) const override;

 private:
  std::map<std::string, Transcript> table_;
};

// Always the same index, clamped to the last token.
class FixedIndexSelector final : public TargetSelector {
 public:
  explicit FixedIndexSelector(std::size_t index) : index_(index) {}
  std::size_t select(const Transcript& w) const override;

 private:
  std::size_t index_;
};

// Token with the lowest corpus frequency; ties go to the lowest index.
// Tokens missing from the table count as frequency 0.
class RarestTokenSelector final : public TargetSelector {
 public:
  explicit RarestTokenSelector(std::map<std::string, std::size_t> frequency)
      : frequency_(std::move(frequency)) {}
  static RarestTokenSelector from_corpus(const std::vector<Transcript>& corpus);
  std::size_t select(const Transcript& w) const override;

 private:
  std::map<std::string, std::size_t> frequency_;
};

// Returns the original audio under the target span. With identical text an
// Inversion through this backend reproduces the input length.
class PassThroughSynthesizer final : public Synthesizer {
 public:
  dsp::Waveform synthesize(const dsp::Waveform& x, const Span& target,
                           const std::string& text) const override;
};

std::size_t select_target(const Transcript& w, const TargetSelector& selector);

// ---- post-processing ----------------------------------------------------

// Drops leading and trailing samples with |x| <= threshold. Throws
// ParameterError for threshold < 0, TooShortError if nothing remains.
dsp::Waveform trim_silence(const dsp::Waveform& x, double threshold);

// Linear fade-out of a's last `overlap` samples against fade-in of b's
// first `overlap`. Length is len a + len b - overlap.
dsp::Waveform crossfade_splice(const dsp::Waveform& a, const dsp::Waveform& b,
                               std::size_t overlap);

struct RenderOptions {
  int crossfade_samples = 160;  // 10 ms at 16 kHz
  double trim_threshold = 0.0;  // applied to the synthesized segment
};

struct RenderResult {
  dsp::Waveform audio;
  std::vector<Span> fake_spans;  // seconds, in the output timeline
  Transcript transcript;         // w-bar aligned with the output audio
  std::size_t fake_begin = 0;    // the same span in samples
  std::size_t fake_end = 0;
  // Crossfade ramps as [begin, end) sample ranges of the output.
  std::vector<std::pair<std::size_t, std::size_t>> ramps;
};

// Splices phi's output into x. Samples outside the returned span are copies
// of the input (shifted when the length changes); the crossfade ramps lie
// inside the span. Deletion synthesizes nothing and the span is the ramp
// joining the two remaining pieces.
RenderResult render_deepfake(const dsp::Waveform& x, const Transcript& w, const EditPlan& plan,
                             const Synthesizer& phi, const RenderOptions& options = {});

}  // namespace pfd::edit
