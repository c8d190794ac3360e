#include "pfd/edit.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pfd::edit {

void Transcript::validate() const {
  double prev_end = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (!(t.start >= 0.0) || !(t.end > t.start)) {
      throw ContractError(fmt::format("token {} has invalid times [{}, {})", i, t.start, t.end));
    }
    if (t.start < prev_end - 1e-9) {
      throw ContractError(fmt::format("token {} overlaps its predecessor", i));
    }
    prev_end = t.end;
  }
}

std::string to_string(EditMode mode) {
  switch (mode) {
    case EditMode::Inversion: return "inversion";
    case EditMode::Insertion: return "insertion";
    case EditMode::Deletion: return "deletion";
  }
  return "?";
}

EditMode edit_mode_from_string(const std::string& s) {
  for (EditMode m : {EditMode::Inversion, EditMode::Insertion, EditMode::Deletion}) {
    if (to_string(m) == s) return m;
  }
  throw ParameterError(fmt::format("unknown edit mode '{}'", s));
}

void EditPlan::validate(const Transcript& w) const {
  if (w.empty()) throw ContractError("edit plan applied to an empty transcript");
  if (target >= w.size()) {
    throw ContractError(fmt::format("target index {} out of range for {} tokens", target, w.size()));
  }
  if (mode == EditMode::Deletion && !text.empty()) {
    throw ParameterError("a deletion carries no replacement text");
  }
  if (mode != EditMode::Deletion && text.empty()) {
    throw ParameterError(fmt::format("{} needs a nonempty text", to_string(mode)));
  }
}

double insertion_point(const Transcript& w, std::size_t target) {
  if (target >= w.size()) throw ContractError("insertion target out of range");
  const double left = target == 0 ? 0.0 : w.tokens[target - 1].end;
  return 0.5 * (left + w.tokens[target].start);
}

Transcript build_manipulated_transcript(const Transcript& w, const EditPlan& plan,
                                        double synth_duration) {
  plan.validate(w);
  const Token& target = w.tokens[plan.target];
  const double d = synth_duration >= 0.0 ? synth_duration : target.end - target.start;
  if (plan.mode != EditMode::Deletion && !(d > 0.0)) {
    throw ParameterError("synthesized token must have positive duration");
  }
  Transcript out;
  out.tokens.reserve(w.size() + 1);
  const auto shift_rest = [&](double delta, std::size_t from) {
    for (std::size_t i = from; i < w.size(); ++i) {
      Token t = w.tokens[i];
      t.start += delta;
      t.end += delta;
      out.tokens.push_back(std::move(t));
    }
  };
  out.tokens.assign(w.tokens.begin(), w.tokens.begin() + static_cast<long>(plan.target));
  switch (plan.mode) {
    case EditMode::Inversion:
      out.tokens.push_back({plan.text, target.start, target.start + d});
      shift_rest(d - (target.end - target.start), plan.target + 1);
      break;
    case EditMode::Insertion: {
      const double at = insertion_point(w, plan.target);
      out.tokens.push_back({plan.text, at, at + d});
      shift_rest(d, plan.target);
      break;
    }
    case EditMode::Deletion:
      shift_rest(-(target.end - target.start), plan.target + 1);
      break;
  }
  return out;
}

void ManifestTranscriber::add(const std::string& utterance_id, Transcript w) {
  w.validate();
  table_[utterance_id] = std::move(w);
}

Transcript ManifestTranscriber::transcribe(const std::string& utterance_id,
                                           const dsp::Waveform&) const {
  auto it = table_.find(utterance_id);
  if (it == table_.end()) throw ContractError(fmt::format("no transcript for '{}'", utterance_id));
  return it->second;
}

std::size_t FixedIndexSelector::select(const Transcript& w) const {
  if (w.empty()) throw ContractError("cannot select a target in an empty transcript");
  return std::min(index_, w.size() - 1);
}

RarestTokenSelector RarestTokenSelector::from_corpus(const std::vector<Transcript>& corpus) {
  std::map<std::string, std::size_t> freq;
  for (const Transcript& w : corpus) {
    for (const Token& t : w.tokens) ++freq[t.text];
  }
  return RarestTokenSelector(std::move(freq));
}

std::size_t RarestTokenSelector::select(const Transcript& w) const {
  if (w.empty()) throw ContractError("cannot select a target in an empty transcript");
  std::size_t best = 0;
  std::size_t best_freq = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto it = frequency_.find(w.tokens[i].text);
    const std::size_t f = it == frequency_.end() ? 0 : it->second;
    if (f < best_freq) {
      best = i;
      best_freq = f;
    }
  }
  return best;
}

namespace {

std::size_t to_sample(double seconds, int rate) {
  return static_cast<std::size_t>(std::llround(std::max(0.0, seconds) * rate));
}

dsp::Waveform slice(const dsp::Waveform& x, std::size_t begin, std::size_t end) {
  end = std::min(end, x.samples.size());
  begin = std::min(begin, end);
  dsp::Waveform out;
  out.sample_rate = x.sample_rate;
  out.samples.assign(x.samples.begin() + static_cast<long>(begin),
                     x.samples.begin() + static_cast<long>(end));
  return out;
}

}  // namespace

dsp::Waveform PassThroughSynthesizer::synthesize(const dsp::Waveform& x, const Span& target,
                                                 const std::string&) const {
  return slice(x, to_sample(target.start, x.sample_rate), to_sample(target.end, x.sample_rate));
}

std::size_t select_target(const Transcript& w, const TargetSelector& selector) {
  if (w.empty()) throw ContractError("cannot select a target in an empty transcript");
  const std::size_t i = selector.select(w);
  if (i >= w.size()) throw ContractError(fmt::format("selector returned invalid index {}", i));
  return i;
}

dsp::Waveform trim_silence(const dsp::Waveform& x, double threshold) {
  if (!(threshold >= 0.0)) throw ParameterError("trim threshold must be >= 0");
  const auto loud = [&](double v) { return std::abs(v) > threshold; };
  auto first = std::find_if(x.samples.begin(), x.samples.end(), loud);
  if (first == x.samples.end()) throw TooShortError("waveform is entirely silent");
  auto last = std::find_if(x.samples.rbegin(), x.samples.rend(), loud).base();
  dsp::Waveform out;
  out.sample_rate = x.sample_rate;
  out.samples.assign(first, last);
  return out;
}

dsp::Waveform crossfade_splice(const dsp::Waveform& a, const dsp::Waveform& b, std::size_t overlap) {
  if (a.sample_rate != b.sample_rate) {
    throw ParameterError(fmt::format("sample rate mismatch: {} vs {}", a.sample_rate, b.sample_rate));
  }
  const std::size_t na = a.samples.size();
  const std::size_t nb = b.samples.size();
  if (overlap > na || overlap > nb) {
    throw ParameterError(fmt::format("overlap {} exceeds a segment ({} / {} samples)", overlap, na, nb));
  }
  dsp::Waveform out;
  out.sample_rate = a.sample_rate;
  out.samples.reserve(na + nb - overlap);
  out.samples.insert(out.samples.end(), a.samples.begin(), a.samples.end() - static_cast<long>(overlap));
  for (std::size_t i = 0; i < overlap; ++i) {
    const double r = (static_cast<double>(i) + 0.5) / static_cast<double>(overlap);
    out.samples.push_back((1.0 - r) * a.samples[na - overlap + i] + r * b.samples[i]);
  }
  out.samples.insert(out.samples.end(), b.samples.begin() + static_cast<long>(overlap), b.samples.end());
  return out;
}

RenderResult render_deepfake(const dsp::Waveform& x, const Transcript& w, const EditPlan& plan,
                             const Synthesizer& phi, const RenderOptions& options) {
  plan.validate(w);
  w.validate();
  if (options.crossfade_samples < 0) throw ParameterError("crossfade length must be >= 0");
  const int sr = x.sample_rate;
  const std::size_t n = x.samples.size();
  const std::size_t fade = static_cast<std::size_t>(options.crossfade_samples);
  const Token& target = w.tokens[plan.target];
  const std::size_t s = std::min(to_sample(target.start, sr), n);
  const std::size_t e = std::min(to_sample(target.end, sr), n);
  if (e <= s) throw ContractError("target token lies outside the waveform");

  RenderResult r;
  if (plan.mode == EditMode::Deletion) {
    // x[0:s] joined to x[e:], the ramp centred on the junction.
    const std::size_t ov = std::min({fade, 2 * s, 2 * (n - s)});
    const std::size_t left = ov / 2;
    const std::size_t right = ov - left;
    r.audio = crossfade_splice(slice(x, 0, s + left), slice(x, e - right, n), ov);
    r.fake_begin = s - right;
    r.fake_end = s + left;
    r.transcript = build_manipulated_transcript(w, plan);
    if (ov > 0) r.ramps.emplace_back(r.fake_begin, r.fake_end);
  } else {
    const std::size_t at =
        plan.mode == EditMode::Inversion ? s : std::min(to_sample(insertion_point(w, plan.target), sr), n);
    const std::size_t resume = plan.mode == EditMode::Inversion ? e : at;
    const Span where = plan.mode == EditMode::Inversion
                           ? Span{target.start, target.end}
                           : Span{static_cast<double>(at) / sr, static_cast<double>(at) / sr};
    dsp::Waveform y = phi.synthesize(x, where, plan.text);
    if (y.sample_rate != sr) throw ParameterError("synthesizer returned a different sample rate");
    y = trim_silence(y, options.trim_threshold);
    const std::size_t ny = y.samples.size();
    // The ramps borrow original samples from just inside the edit region so
    // the synthesized segment starts at `at` and the tail resumes at `resume`.
    const std::size_t ov1 = std::min({fade, n - at, ny / 2});
    const std::size_t ov2 = std::min({fade, resume, ny - ov1});
    dsp::Waveform head = crossfade_splice(slice(x, 0, at + ov1), y, ov1);
    r.audio = crossfade_splice(head, slice(x, resume - ov2, n), ov2);
    r.fake_begin = at;
    r.fake_end = at + ny;
    r.transcript = build_manipulated_transcript(w, plan, static_cast<double>(ny) / sr);
    if (ov1 > 0) r.ramps.emplace_back(at, at + ov1);
    if (ov2 > 0) r.ramps.emplace_back(at + ny - ov2, at + ny);
  }
  if (r.fake_end > r.fake_begin) {
    r.fake_spans.push_back({static_cast<double>(r.fake_begin) / sr, static_cast<double>(r.fake_end) / sr});
  }
  return r;
}

}  // namespace pfd::edit
