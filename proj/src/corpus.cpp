#include "pfd/corpus.hpp"

#include "pfd/error.hpp"
#include "pfd/wav_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>

namespace pfd::corpus {

using json = nlohmann::json;
namespace fs = std::filesystem;

void SpeakerSpec::validate() const {
  if (!(f0 > 0.0)) throw ParameterError("speaker f0 must be > 0");
  if (!(token_min > 0.0) || !(token_max >= token_min)) {
    throw ParameterError("speaker token durations must satisfy 0 < min <= max");
  }
  if (!(noise_floor >= 0.0)) throw ParameterError("noise floor must be >= 0");
}

SpeakerSpec random_speaker(std::uint64_t seed) {
  Rng rng = derive_rng({seed, 0x5045u});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SpeakerSpec s;
  s.f0 = 90.0 + 130.0 * u(rng);
  s.rolloff = 0.8 + 0.8 * u(rng);
  s.noise_floor = 0.001 + 0.002 * u(rng);
  s.token_min = 0.18 + 0.06 * u(rng);
  s.token_max = s.token_min + 0.12 + 0.08 * u(rng);
  s.seed = seed;
  return s;
}

std::uint64_t text_hash(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double token_f0_factor(std::string_view text) {
  return 0.8 + 0.45 * static_cast<double>(text_hash(text) % 1000) / 1000.0;
}

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "the",    "a",      "is",     "we",      "will",    "to",     "and",    "price",
      "market", "rate",   "report", "today",   "people",  "plan",   "water",  "city",
      "school", "house",  "money",  "project", "company", "result", "season", "policy",
      "open",   "close",  "agree",  "refuse",  "accept",  "reject", "win",    "lose",
      "rise",   "fall",   "buy",    "sell",    "arrive",  "leave",  "safe",   "unsafe",
      "always", "never",  "more",   "less",    "early",   "late",   "true",   "false",
      "strong", "weak",   "legal",  "illegal", "approve", "deny",   "expand", "reduce"};
  return words;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kEdgeSeconds = 0.015;
constexpr double kTokenLevel = 0.3;

// Zipf-like word weights so that corpus frequencies differ across words.
double word_weight(std::size_t rank) { return 1.0 / std::sqrt(static_cast<double>(rank) + 1.0); }

std::size_t seconds_to_samples(double s, int sr) {
  return static_cast<std::size_t>(std::llround(s * sr));
}

double envelope(std::size_t i, std::size_t n, std::size_t edge) {
  edge = std::min(edge, n / 2);
  if (edge == 0) return 1.0;
  const auto ramp = [&](std::size_t k) {
    return 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(k) + 0.5) / edge);
  };
  if (i < edge) return ramp(i);
  if (i >= n - edge) return ramp(n - 1 - i);
  return 1.0;
}

struct Voice {
  double f0 = 0.0;
  std::vector<double> amps;
  std::vector<double> phases;
  double vibrato_depth = 0.0;
  double vibrato_rate = 0.0;
  double vibrato_phase = 0.0;
  double level = kTokenLevel;
};

void add_burst(std::vector<double>& out, std::size_t begin, std::size_t n, const Voice& v, int sr) {
  double sum_amp = 0.0;
  for (double a : v.amps) sum_amp += a;
  const double norm = sum_amp > 0.0 ? v.level / sum_amp : 0.0;
  const std::size_t edge = seconds_to_samples(kEdgeSeconds, sr);
  // sin(k theta + phi_k) = Im(z^k e^{i phi_k}) with z = e^{i theta}.
  std::vector<std::complex<double>> offsets;
  for (std::size_t k = 0; k < v.amps.size(); ++k) offsets.push_back(v.amps[k] * std::polar(1.0, v.phases[k]));
  double cycle = 0.0;  // integrated f0 / sr
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f = v.f0 * (1.0 + v.vibrato_depth * std::sin(kTwoPi * v.vibrato_rate * t + v.vibrato_phase));
    const std::complex<double> z = std::polar(1.0, kTwoPi * cycle);
    std::complex<double> zk = z;
    double s = 0.0;
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      s += (zk * offsets[k]).imag();
      zk *= z;
    }
    out[begin + i] += norm * envelope(i, n, edge) * s;
    cycle += f / sr;
  }
}

int harmonic_count(double f0, double max_factor, int sr) {
  return std::max(1, static_cast<int>(0.45 * sr / (f0 * max_factor)));
}

Voice bona_fide_voice(const SpeakerSpec& spec, std::string_view text, int sr, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Voice v;
  v.f0 = spec.f0 * token_f0_factor(text);
  v.vibrato_depth = 0.005 + 0.01 * u(rng);
  v.vibrato_rate = 4.0 + 2.0 * u(rng);
  v.vibrato_phase = kTwoPi * u(rng);
  v.level = kTokenLevel * (0.7 + 0.3 * u(rng));
  const int K = harmonic_count(v.f0, 1.0 + v.vibrato_depth, sr);
  for (int k = 1; k <= K; ++k) {
    v.amps.push_back(std::pow(k, -spec.rolloff) * (0.8 + 0.4 * u(rng)));
    v.phases.push_back(kTwoPi * u(rng));
  }
  return v;
}

Voice proxy_voice(const SpeakerSpec& spec, std::string_view text, int sr) {
  Voice v;
  v.f0 = spec.f0 * token_f0_factor(text);
  v.level = kTokenLevel * 0.85;
  const int K = harmonic_count(v.f0, 1.0, sr);
  for (int k = 1; k <= K; ++k) {
    v.amps.push_back(std::pow(k, -spec.rolloff));
    v.phases.push_back(0.0);
  }
  return v;
}

}  // namespace

Utterance render_tokens(const SpeakerSpec& spec, const std::vector<std::string>& words,
                        const std::vector<double>& durations, const std::vector<double>& gaps,
                        Rng& rng) {
  spec.validate();
  if (words.empty()) throw ParameterError("an utterance needs at least one token");
  if (durations.size() != words.size() || gaps.size() + 1 != words.size()) {
    throw DimensionError("need one duration per token and one gap between consecutive tokens");
  }
  const int sr = dsp::kDefaultSampleRate;
  const std::size_t pad = seconds_to_samples(kPadSeconds, sr);
  std::vector<std::size_t> lens, gap_lens;
  std::size_t total = 2 * pad;
  for (double d : durations) {
    if (!(d > 0.0)) throw ParameterError("token durations must be > 0");
    lens.push_back(std::max<std::size_t>(1, seconds_to_samples(d, sr)));
    total += lens.back();
  }
  for (double g : gaps) {
    if (!(g >= 0.0)) throw ParameterError("gaps must be >= 0");
    gap_lens.push_back(seconds_to_samples(g, sr));
    total += gap_lens.back();
  }

  Utterance u;
  u.audio.sample_rate = sr;
  u.audio.samples.assign(total, 0.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& s : u.audio.samples) s = spec.noise_floor * noise(rng);

  std::size_t pos = pad;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const Voice v = bona_fide_voice(spec, words[i], sr, rng);
    add_burst(u.audio.samples, pos, lens[i], v, sr);
    u.transcript.tokens.push_back({words[i], static_cast<double>(pos) / sr,
                                   static_cast<double>(pos + lens[i]) / sr});
    pos += lens[i];
    if (i < gap_lens.size()) pos += gap_lens[i];
  }
  return u;
}

Utterance generate_utterance(const SpeakerSpec& spec, int n_tokens, Rng& rng) {
  spec.validate();
  if (n_tokens < 1) throw ParameterError("n_tokens must be >= 1");
  const auto& vocab = vocabulary();
  std::vector<double> weights(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) weights[i] = word_weight(i);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::uniform_real_distribution<double> dur(spec.token_min, spec.token_max);
  std::uniform_real_distribution<double> gap(kMinGap, kMaxGap);
  std::vector<std::string> words;
  std::vector<double> durations, gaps;
  for (int i = 0; i < n_tokens; ++i) {
    words.push_back(vocab[pick(rng)]);
    durations.push_back(dur(rng));
    if (i + 1 < n_tokens) gaps.push_back(gap(rng));
  }
  return render_tokens(spec, words, durations, gaps, rng);
}

dsp::Waveform synth_proxy(const SpeakerSpec& spec, std::string_view text, double noise_delta,
                          Rng& rng) {
  spec.validate();
  if (text.empty()) throw ParameterError("synth_proxy needs a nonempty text");
  if (!(noise_delta >= 0.0)) throw ParameterError("proxy noise delta must be >= 0");
  const int sr = dsp::kDefaultSampleRate;
  std::uniform_real_distribution<double> dur(spec.token_min, spec.token_max);
  const std::size_t n = std::max<std::size_t>(1, seconds_to_samples(dur(rng), sr));
  dsp::Waveform out;
  out.sample_rate = sr;
  out.samples.assign(n, 0.0);
  std::normal_distribution<double> noise(0.0, spec.noise_floor + noise_delta);
  for (double& s : out.samples) s = noise(rng);
  add_burst(out.samples, 0, n, proxy_voice(spec, text, sr), sr);
  return out;
}

dsp::Waveform ProxySynthesizer::synthesize(const dsp::Waveform& x, const Span& target,
                                           const std::string& text) const {
  Rng rng = derive_rng({seed_, text_hash(text), seconds_to_samples(target.start, x.sample_rate)});
  return synth_proxy(spec_, text, noise_delta_, rng);
}

double spectral_flatness(const dsp::Waveform& x, int fft_size) {
  const Mat mag = dsp::compute_stft(x.samples, fft_size, fft_size / 2, fft_size, dsp::Window::Hann);
  double total = 0.0;
  for (Eigen::Index r = 0; r < mag.rows(); ++r) {
    double log_sum = 0.0, sum = 0.0;
    const Eigen::Index bins = mag.cols() - 1;
    for (Eigen::Index k = 1; k < mag.cols(); ++k) {
      const double p = std::max(mag(r, k) * mag(r, k), 1e-20);
      log_sum += std::log(p);
      sum += p;
    }
    total += std::exp(log_sum / bins) / (sum / bins);
  }
  return total / mag.rows();
}

// ---------------------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  for (Split x : {Split::Train, Split::Val, Split::Test}) {
    if (to_string(x) == s) return x;
  }
  throw ParameterError(fmt::format("unknown split '{}'", s));
}

void DatasetConfig::validate() const {
  if (n_utterances < 1) throw ParameterError("n_utterances must be >= 1");
  if (!(fake_fraction >= 0.0 && fake_fraction <= 1.0)) throw ParameterError("fake_fraction must be in [0, 1]");
  if (std::any_of(mode_weights.begin(), mode_weights.end(), [](double w) { return !(w >= 0.0); }) ||
      mode_weights[0] + mode_weights[1] + mode_weights[2] <= 0.0) {
    throw ParameterError("mode weights must be >= 0 with a positive sum");
  }
  if (n_speakers < 3) throw ParameterError("need at least 3 speakers for disjoint splits");
  if (min_tokens < 1 || max_tokens < min_tokens) throw ParameterError("bad token count range");
  if (!(min_seconds > 0.0) || !(max_seconds >= min_seconds)) throw ParameterError("bad duration range");
  if (!(proxy_noise_delta >= 0.0)) throw ParameterError("proxy_noise_delta must be >= 0");
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || train_fraction + val_fraction >= 1.0) {
    throw ParameterError("split fractions must be positive and leave room for a test split");
  }
  if (crossfade_samples < 0) throw ParameterError("crossfade_samples must be >= 0");
}

namespace {

std::vector<Split> assign_speaker_splits(const DatasetConfig& c) {
  std::vector<int> order(c.n_speakers);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng({c.seed, 0x53504cu});
  std::shuffle(order.begin(), order.end(), rng);
  const int n = c.n_speakers;
  const int n_train = std::clamp(static_cast<int>(std::lround(c.train_fraction * n)), 1, n - 2);
  const int n_val = std::clamp(static_cast<int>(std::lround(c.val_fraction * n)), 1, n - n_train - 1);
  std::vector<Split> split(n, Split::Test);
  for (int i = 0; i < n; ++i) {
    if (i < n_train) split[order[i]] = Split::Train;
    else if (i < n_train + n_val) split[order[i]] = Split::Val;
  }
  return split;
}

std::string pick_other_word(const std::string& avoid, Rng& rng) {
  const auto& vocab = vocabulary();
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  for (;;) {
    const std::string& w = vocab[pick(rng)];
    if (w != avoid) return w;
  }
}

edit::RarestTokenSelector corpus_selector() {
  // Expected relative frequencies of the word sampler, scaled to integers.
  std::map<std::string, std::size_t> freq;
  const auto& vocab = vocabulary();
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    freq[vocab[i]] = static_cast<std::size_t>(std::lround(1000.0 * word_weight(i)));
  }
  return edit::RarestTokenSelector(std::move(freq));
}

}  // namespace

Corpus generate_corpus(const DatasetConfig& config) {
  config.validate();
  std::vector<SpeakerSpec> speakers;
  for (int i = 0; i < config.n_speakers; ++i) {
    speakers.push_back(random_speaker(config.seed * 1000003ull + static_cast<std::uint64_t>(i)));
  }
  const std::vector<Split> speaker_split = assign_speaker_splits(config);
  const edit::RarestTokenSelector selector = corpus_selector();

  Corpus out;
  out.records.reserve(config.n_utterances);
  for (int u = 0; u < config.n_utterances; ++u) {
    Rng rng = derive_rng({config.seed, 0x555454u, static_cast<std::uint64_t>(u)});
    std::uniform_int_distribution<int> pick_speaker(0, config.n_speakers - 1);
    std::uniform_int_distribution<int> pick_tokens(config.min_tokens, config.max_tokens);
    const int spk = pick_speaker(rng);
    const SpeakerSpec& spec = speakers[spk];

    Utterance utt;
    for (int attempt = 0; attempt < 64; ++attempt) {
      utt = generate_utterance(spec, pick_tokens(rng), rng);
      const double d = utt.audio.duration();
      if (d >= config.min_seconds && d <= config.max_seconds) break;
    }
    for (double& s : utt.audio.samples) s = dsp::quantize_pcm16(s);

    UtteranceRecord rec;
    rec.id = fmt::format("utt{:05d}", u);
    rec.speaker = spk;
    rec.split = speaker_split[spk];
    rec.config_digest = config.digest;

    std::bernoulli_distribution is_fake(config.fake_fraction);
    if (is_fake(rng)) {
      std::discrete_distribution<int> pick_mode(config.mode_weights.begin(), config.mode_weights.end());
      edit::EditPlan plan;
      plan.mode = static_cast<edit::EditMode>(pick_mode(rng));
      plan.target = edit::select_target(utt.transcript, selector);
      const std::string& old_word = utt.transcript.tokens[plan.target].text;
      if (plan.mode != edit::EditMode::Deletion) plan.text = pick_other_word(old_word, rng);
      const ProxySynthesizer phi(spec, config.proxy_noise_delta,
                                 config.seed * 7919ull + static_cast<std::uint64_t>(u));
      edit::RenderOptions opts;
      opts.crossfade_samples = config.crossfade_samples;
      edit::RenderResult r = edit::render_deepfake(utt.audio, utt.transcript, plan, phi, opts);
      for (double& s : r.audio.samples) s = dsp::quantize_pcm16(s);
      rec.wav = fmt::format("wav/{}.wav", rec.id);
      rec.source_wav = fmt::format("source/{}.wav", rec.id);
      rec.transcript = std::move(r.transcript);
      rec.fake_spans = std::move(r.fake_spans);
      rec.plan = plan;
      out.audio.push_back(std::move(r.audio));
      out.sources.emplace_back(std::move(utt.audio));
    } else {
      rec.wav = fmt::format("wav/{}.wav", rec.id);
      rec.transcript = std::move(utt.transcript);
      out.audio.push_back(std::move(utt.audio));
      out.sources.emplace_back(std::nullopt);
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

Corpus make_dataset(const DatasetConfig& config, const fs::path& out_dir) {
  Corpus c = generate_corpus(config);
  std::error_code ec;
  fs::create_directories(out_dir / "wav", ec);
  if (!ec) fs::create_directories(out_dir / "source", ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    dsp::write_wav(out_dir / c.records[i].wav, c.audio[i]);
    if (c.sources[i]) dsp::write_wav(out_dir / c.records[i].source_wav, *c.sources[i]);
  }
  write_manifest(c.records, out_dir / "manifest.jsonl");
  write_edit_plans(c.records, out_dir / "edit_plans.jsonl");
  return c;
}

namespace {

json transcript_to_json(const edit::Transcript& w) {
  json arr = json::array();
  for (const auto& t : w.tokens) arr.push_back({{"text", t.text}, {"start", t.start}, {"end", t.end}});
  return arr;
}

edit::Transcript transcript_from_json(const json& arr) {
  edit::Transcript w;
  for (const auto& t : arr) {
    w.tokens.push_back({t.at("text").get<std::string>(), t.at("start").get<double>(), t.at("end").get<double>()});
  }
  return w;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError(fmt::format("cannot write {}", path.string()));
  return f;
}

}  // namespace

void write_manifest(const std::vector<UtteranceRecord>& records, const fs::path& path) {
  std::ofstream f = open_out(path);
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["wav"] = r.wav;
    if (!r.source_wav.empty()) j["source_wav"] = r.source_wav;
    j["transcript"] = transcript_to_json(r.transcript);
    json spans = json::array();
    for (const auto& s : r.fake_spans) spans.push_back({s.start, s.end});
    j["fake_spans"] = spans;
    j["split"] = to_string(r.split);
    j["speaker"] = r.speaker;
    if (r.plan) {
      j["mode"] = edit::to_string(r.plan->mode);
      j["target"] = r.plan->target;
      j["text"] = r.plan->text;
    }
    j["config_digest"] = r.config_digest;
    f << j.dump() << '\n';
  }
  if (!f) throw IoError(fmt::format("failed writing {}", path.string()));
}

std::vector<UtteranceRecord> read_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(fmt::format("cannot read {}", path.string()));
  std::vector<UtteranceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      UtteranceRecord r;
      r.id = j.at("id").get<std::string>();
      r.wav = j.at("wav").get<std::string>();
      r.source_wav = j.value("source_wav", std::string());
      r.transcript = transcript_from_json(j.at("transcript"));
      for (const auto& s : j.at("fake_spans")) r.fake_spans.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
      r.split = split_from_string(j.at("split").get<std::string>());
      r.speaker = j.value("speaker", 0);
      if (j.contains("mode")) {
        edit::EditPlan p;
        p.mode = edit::edit_mode_from_string(j.at("mode").get<std::string>());
        p.target = j.at("target").get<std::size_t>();
        p.text = j.value("text", std::string());
        r.plan = p;
      }
      r.config_digest = j.value("config_digest", std::string());
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IoError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

void write_edit_plans(const std::vector<UtteranceRecord>& records, const fs::path& path) {
  std::ofstream f = open_out(path);
  for (const auto& r : records) {
    if (!r.plan) continue;
    json j{{"id", r.id}, {"mode", edit::to_string(r.plan->mode)}, {"target", r.plan->target},
           {"text", r.plan->text}};
    f << j.dump() << '\n';
  }
}

std::vector<std::uint8_t> record_frame_labels(const UtteranceRecord& r, std::size_t n_frames,
                                              double hop_seconds) {
  return frame_labels_from_spans(r.fake_spans, n_frames, hop_seconds);
}

std::vector<std::uint8_t> diff_frame_labels(const dsp::Waveform& source, const dsp::Waveform& edited,
                                            int hop_samples) {
  const auto& a = source.samples;
  const auto& b = edited.samples;
  const std::size_t n_frames = (b.size() + hop_samples - 1) / hop_samples;
  std::vector<std::uint8_t> labels(n_frames, kReal);
  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix]) {
    ++suffix;
  }
  const std::size_t begin = prefix;
  const std::size_t end = b.size() - suffix;
  if (end <= begin) {
    // Same length and content would give no diff; a pure length change puts
    // the edit at the prefix boundary.
    if (a.size() == b.size()) return labels;
    const std::size_t f = std::min(begin / hop_samples, n_frames - 1);
    labels[f] = kFake;
    return labels;
  }
  for (std::size_t f = begin / hop_samples; f * hop_samples < end && f < n_frames; ++f) labels[f] = kFake;
  return labels;
}

}  // namespace pfd::corpus
