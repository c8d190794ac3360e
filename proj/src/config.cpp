#include "pfd/config.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace pfd::config {

namespace {

enum class Group { Model, FrontEnd, Train, Corpus, Seed, Run };

struct Field {
  Group group;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParameterError(fmt::format("not a number of the expected type{}", key.empty() ? "" : " for " + key));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError(fmt::format("expected true or false{}", key.empty() ? "" : " for " + key));
}

std::string show(double v) { return fmt::format("{}", v); }
std::string show(int v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }

template <typename T>
Field number(Group g, T RunConfig::*outer, auto member) {
  return {g,
          [outer, member](RunConfig& c, const std::string& v) {
            using V = std::remove_reference_t<decltype(c.*outer.*member)>;
            (c.*outer).*member = parse_number<V>("", v);
          },
          [outer, member](const RunConfig& c) { return show((c.*outer).*member); }};
}

template <typename T>
Field flag(Group g, T RunConfig::*outer, bool T::*member) {
  return {g, [outer, member](RunConfig& c, const std::string& v) { (c.*outer).*member = parse_bool("", v); },
          [outer, member](const RunConfig& c) { return show((c.*outer).*member); }};
}

const std::map<std::string, Field>& fields() {
  using M = model::PfdConfig;
  using F = dsp::FrontEndConfig;
  using T = train::TrainConfig;
  using C = corpus::DatasetConfig;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["lf_layers"] = number(Group::Model, &RunConfig::model, &M::lf_layers);
    t["hf_layers"] = number(Group::Model, &RunConfig::model, &M::hf_layers);
    t["hidden"] = number(Group::Model, &RunConfig::model, &M::hidden);
    t["d_lf"] = number(Group::Model, &RunConfig::model, &M::d_lf);
    t["d_hf"] = number(Group::Model, &RunConfig::model, &M::d_hf);
    t["lf_mels"] = number(Group::Model, &RunConfig::model, &M::lf_mels);
    t["fine_factor"] = number(Group::Model, &RunConfig::model, &M::fine_factor);
    t["lambda"] = number(Group::Model, &RunConfig::model, &M::lambda);
    t["temperature"] = number(Group::Model, &RunConfig::model, &M::temperature);
    t["lr"] = number(Group::Train, &RunConfig::model, &M::lr);
    t["mean_fine_loss"] = flag(Group::Model, &RunConfig::model, &M::mean_fine_loss);

    t["win_samples"] = number(Group::FrontEnd, &RunConfig::frontend, &F::win_samples);
    t["hop_samples"] = number(Group::FrontEnd, &RunConfig::frontend, &F::hop_samples);
    t["fft_size"] = number(Group::FrontEnd, &RunConfig::frontend, &F::fft_size);
    t["fmin"] = number(Group::FrontEnd, &RunConfig::frontend, &F::fmin);
    t["fmax"] = number(Group::FrontEnd, &RunConfig::frontend, &F::fmax);

    t["max_epochs"] = number(Group::Train, &RunConfig::train, &T::max_epochs);
    t["patience"] = number(Group::Train, &RunConfig::train, &T::patience);
    t["batch_size"] = number(Group::Train, &RunConfig::train, &T::batch_size);
    t["grad_clip"] = number(Group::Train, &RunConfig::train, &T::grad_clip);
    t["plateau_patience"] = number(Group::Train, &RunConfig::train, &T::plateau_patience);
    t["plateau_factor"] = number(Group::Train, &RunConfig::train, &T::plateau_factor);
    t["min_lr"] = number(Group::Train, &RunConfig::train, &T::min_lr);
    t["lf_warmup_epochs"] = number(Group::Train, &RunConfig::train, &T::lf_warmup_epochs);
    t["hf_warmup_epochs"] = number(Group::Train, &RunConfig::train, &T::hf_warmup_epochs);
    t["train_mode"] = {Group::Train,
                       [](RunConfig& c, const std::string& v) { c.train.mode = model::gate_mode_from_string(v); },
                       [](const RunConfig& c) { return model::to_string(c.train.mode); }};

    t["n_utterances"] = number(Group::Corpus, &RunConfig::corpus, &C::n_utterances);
    t["fake_fraction"] = number(Group::Corpus, &RunConfig::corpus, &C::fake_fraction);
    t["n_speakers"] = number(Group::Corpus, &RunConfig::corpus, &C::n_speakers);
    t["min_tokens"] = number(Group::Corpus, &RunConfig::corpus, &C::min_tokens);
    t["max_tokens"] = number(Group::Corpus, &RunConfig::corpus, &C::max_tokens);
    t["min_seconds"] = number(Group::Corpus, &RunConfig::corpus, &C::min_seconds);
    t["max_seconds"] = number(Group::Corpus, &RunConfig::corpus, &C::max_seconds);
    t["proxy_noise_delta"] = number(Group::Corpus, &RunConfig::corpus, &C::proxy_noise_delta);
    t["train_fraction"] = number(Group::Corpus, &RunConfig::corpus, &C::train_fraction);
    t["val_fraction"] = number(Group::Corpus, &RunConfig::corpus, &C::val_fraction);
    t["crossfade_samples"] = number(Group::Corpus, &RunConfig::corpus, &C::crossfade_samples);
    t["mode_weights"] = {Group::Corpus,
                         [](RunConfig& c, const std::string& v) {
                           std::stringstream ss(v);
                           std::string part;
                           std::vector<double> w;
                           while (std::getline(ss, part, ',')) w.push_back(parse_number<double>("mode_weights", trim(part)));
                           if (w.size() != 3) throw ParameterError("mode_weights needs three comma-separated values");
                           c.corpus.mode_weights = {w[0], w[1], w[2]};
                         },
                         [](const RunConfig& c) {
                           const auto& w = c.corpus.mode_weights;
                           return fmt::format("{},{},{}", w[0], w[1], w[2]);
                         }};

    t["seed"] = {Group::Seed, [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const RunConfig& c) { return show(c.seed); }};
    t["gate_mode"] = {Group::Run,
                      [](RunConfig& c, const std::string& v) { c.gate_mode = model::gate_mode_from_string(v); },
                      [](const RunConfig& c) { return model::to_string(c.gate_mode); }};
    t["detect_threshold"] = {Group::Run,
                             [](RunConfig& c, const std::string& v) {
                               c.detect_threshold = parse_number<double>("detect_threshold", v);
                             },
                             [](const RunConfig& c) { return show(c.detect_threshold); }};
    t["bench_repeats"] = {Group::Run,
                          [](RunConfig& c, const std::string& v) { c.bench_repeats = parse_number<int>("bench_repeats", v); },
                          [](const RunConfig& c) { return show(c.bench_repeats); }};
    return t;
  }();
  return table;
}

std::string digest_of(const RunConfig& c, std::initializer_list<Group> groups) {
  std::string text;
  for (const auto& [key, f] : fields()) {
    if (std::find(groups.begin(), groups.end(), f.group) == groups.end()) continue;
    text += key + "=" + f.get(c) + "\n";
  }
  return sha256_hex(text);
}

}  // namespace

RunConfig::RunConfig() {
  model.lr = 1e-3;
  model.mean_fine_loss = true;
  train.lf_warmup_epochs = 20;
  train.hf_warmup_epochs = 3;
  train.max_epochs = 10;
  train.patience = 4;
  train.plateau_patience = 3;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ParameterError(fmt::format("unknown config key '{}'", key));
  try {
    it->second.set(*this, trim(value));
  } catch (const ParameterError& e) {
    throw ParameterError(fmt::format("config key '{}' = '{}': {}", key, trim(value), e.what()));
  } catch (const ContractError& e) {
    throw ParameterError(fmt::format("config key '{}' = '{}': {}", key, trim(value), e.what()));
  }
}

std::string RunConfig::get(const std::string& key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ParameterError(fmt::format("unknown config key '{}'", key));
  return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, f] : fields()) out.push_back(key);
    return out;
  }();
  return k;
}

void RunConfig::resolve() {
  model.seed = seed;
  corpus.seed = seed;
  frontend.hf_mels = model.d_hf;
  frontend.lf_mels = model.lf_mels;
  frontend.frames_per_window = model.fine_factor;
  model.validate();
  train.validate();
  corpus.validate();
  if (frontend.win_samples < 1 || frontend.hop_samples < 1 || frontend.fft_size < frontend.win_samples) {
    throw ParameterError("front-end needs win_samples, hop_samples >= 1 and fft_size >= win_samples");
  }
  if (!(frontend.fmin >= 0.0 && frontend.fmax > frontend.fmin && frontend.fmax <= frontend.sample_rate / 2.0)) {
    throw ParameterError("front-end needs 0 <= fmin < fmax <= Nyquist");
  }
  if (gate_mode == model::GateMode::Relaxed || gate_mode == model::GateMode::StraightThrough) {
    throw ParameterError("gate_mode must be hard, always_on or always_off");
  }
  if (!(detect_threshold > 0.0 && detect_threshold < 1.0)) throw ParameterError("detect_threshold must be in (0, 1)");
  if (bench_repeats < 1) throw ParameterError("bench_repeats must be >= 1");
  corpus.digest = corpus_digest();
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::model_digest() const { return digest_of(*this, {Group::Model, Group::FrontEnd}); }

std::string RunConfig::corpus_digest() const { return digest_of(*this, {Group::Corpus, Group::Seed}); }

void apply_text(RunConfig& config, std::string_view text, const std::string& origin) {
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ParameterError(fmt::format("{}:{}: expected 'key = value'", origin, line_no));
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (!seen.insert(key).second) throw ParameterError(fmt::format("{}:{}: key '{}' repeated", origin, line_no, key));
    try {
      config.set(key, body.substr(eq + 1));
    } catch (const ParameterError& e) {
      throw ParameterError(fmt::format("{}:{}: {}", origin, line_no, e.what()));
    }
  }
}

void apply_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  apply_text(config, ss.str(), path.string());
}

std::vector<std::string> apply_env(RunConfig& config) {
  std::vector<std::string> applied;
  for (const std::string& key : RunConfig::keys()) {
    std::string name(kEnvPrefix);
    for (char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const char* v = std::getenv(name.c_str())) {
      config.set(key, v);
      applied.push_back(key);
    }
  }
  return applied;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 digest failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

}  // namespace pfd::config
