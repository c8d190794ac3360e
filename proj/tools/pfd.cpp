#include "pfd/checkpoint.hpp"
#include "pfd/config.hpp"
#include "pfd/corpus.hpp"
#include "pfd/error.hpp"
#include "pfd/evaluation.hpp"
#include "pfd/gating.hpp"
#include "pfd/pipeline.hpp"
#include "pfd/trainer.hpp"
#include "pfd/wav_io.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

using json = nlohmann::json;
using namespace pfd;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDigest = 3;

class DigestMismatch : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  bool verbose = false;
};

config::RunConfig resolve_config(const Common& o) {
  config::RunConfig c;
  if (!o.config_path.empty()) config::apply_file(c, o.config_path);
  for (const auto& key : config::apply_env(c)) spdlog::info("env override: {} = {}", key, c.get(key));
  if (o.seed) c.seed = *o.seed;
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParameterError(fmt::format("--set expects key=value, got '{}'", kv));
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.resolve();
  spdlog::info("seed {}", c.seed);
  for (const auto& key : config::RunConfig::keys()) spdlog::debug("config {} = {}", key, c.get(key));
  return c;
}

std::optional<corpus::Split> parse_split(const std::string& s) {
  if (s == "all") return std::nullopt;
  return corpus::split_from_string(s);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError(fmt::format("cannot write {}", path.string()));
  f << text;
}

// Writes to the given file, or stdout when the path is empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw IoError(fmt::format("cannot write {}", path));
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  bool to_stdout() const { return !file_.is_open(); }

 private:
  std::ofstream file_;
};

model::PfdParams load_params(const std::string& path, const config::RunConfig& c) {
  if (path.empty()) throw ParameterError("--checkpoint is required");
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.config_digest != c.model_digest()) {
    throw DigestMismatch(fmt::format("checkpoint {} was written for config digest {}, the current config has {}; "
                                     "refusing to run",
                                     path, ck.config_digest, c.model_digest()));
  }
  return train::params_from_checkpoint(ck, c.model);
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& o) {
  const config::RunConfig c = resolve_config(o);
  const std::filesystem::path out = o.out.empty() ? "data" : o.out;
  const corpus::Corpus corpus = corpus::make_dataset(c.corpus, out);
  write_text(out / "config.txt", c.to_text());
  std::size_t fakes = 0;
  std::map<std::string, std::size_t> per_split;
  for (const auto& r : corpus.records) {
    fakes += r.is_fake() ? 1 : 0;
    ++per_split[corpus::to_string(r.split)];
  }
  json j;
  j["manifest"] = (out / "manifest.jsonl").string();
  j["utterances"] = corpus.records.size();
  j["fake"] = fakes;
  j["fake_fraction"] = static_cast<double>(fakes) / static_cast<double>(corpus.records.size());
  j["splits"] = per_split;
  j["seed"] = c.seed;
  j["config_digest"] = c.corpus.digest;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_train(const Common& o) {
  const config::RunConfig c = resolve_config(o);
  if (o.manifest.empty()) throw ParameterError("--manifest is required");
  const std::filesystem::path out = o.out.empty() ? "run" : o.out;
  std::filesystem::create_directories(out);
  write_text(out / "config.txt", c.to_text());

  const dsp::FeatureExtractor fx(c.frontend);
  const auto train_set = pipeline::load_examples(o.manifest, corpus::Split::Train, fx);
  const auto val_set = pipeline::load_examples(o.manifest, corpus::Split::Val, fx);
  if (train_set.empty() || val_set.empty()) throw ContractError("train and val splits must be nonempty");
  spdlog::info("train {} utterances, val {}", train_set.size(), val_set.size());

  const std::string digest = c.model_digest();
  Rng init_rng = derive_rng({c.seed, 0x696e6974u});
  model::PfdParams init = model::PfdParams::random(c.model, init_rng);
  init.norm = train::fit_feature_norm(train_set);
  train::Trainer trainer(c.model, c.train, init);
  if (!o.checkpoint.empty()) {
    const nn::Checkpoint ck = nn::load_checkpoint(o.checkpoint);
    if (ck.config_digest != digest) {
      throw DigestMismatch(fmt::format("cannot resume from {}: digest {} differs from {}", o.checkpoint,
                                       ck.config_digest, digest));
    }
    trainer.restore(ck);
    spdlog::info("resumed at epoch {}", trainer.state().epoch);
  }

  std::ofstream stats(out / "stats.jsonl", o.checkpoint.empty() ? std::ios::trunc : std::ios::app);
  if (!stats) throw IoError("cannot write stats.jsonl");
  const auto on_epoch = [&](const train::EpochStats& s, const train::Trainer& t) {
    json j;
    j["epoch"] = s.epoch;
    j["mode"] = model::to_string(c.train.mode_for_epoch(s.epoch));
    j["train_loss"] = s.train_loss;
    j["val_loss"] = s.val_loss;
    j["train_activation"] = s.train_activation;
    j["activation_rate"] = s.activation_rate;
    j["lr"] = s.lr;
    j["seconds"] = s.seconds;
    j["improved"] = s.improved;
    j["seed"] = s.seed;
    j["config_digest"] = digest;
    stats << j.dump() << "\n" << std::flush;
    spdlog::info("epoch {} [{}] train {:.4f} val {:.4f} p {:.3f} lr {:.2g} ({:.1f}s)", s.epoch,
                 model::to_string(c.train.mode_for_epoch(s.epoch)), s.train_loss, s.val_loss, s.activation_rate,
                 s.lr, s.seconds);
    nn::save_checkpoint(out / "trainer.ckpt", t.checkpoint(digest));
    nn::save_checkpoint(out / "best.ckpt", train::params_checkpoint(t.best_params(), digest));
  };
  const auto history = trainer.fit(train_set, val_set, on_epoch);
  nn::save_checkpoint(out / "best.ckpt", train::params_checkpoint(trainer.best_params(), digest));

  json j;
  j["checkpoint"] = (out / "best.ckpt").string();
  j["epochs"] = trainer.state().epoch;
  j["best_val_loss"] = trainer.state().best_val;
  j["seed"] = c.seed;
  j["config_digest"] = digest;
  std::cout << j.dump() << "\n";
  return 0;
}

json span_list(const std::vector<Span>& spans) {
  json a = json::array();
  for (const Span& s : spans) a.push_back({s.start, s.end});
  return a;
}

int cmd_detect(const Common& o, const std::vector<std::string>& wavs) {
  const config::RunConfig c = resolve_config(o);
  const model::PfdParams params = load_params(o.checkpoint, c);
  const dsp::FeatureExtractor fx(c.frontend);
  std::vector<train::Example> inputs;
  if (!o.manifest.empty()) inputs = pipeline::load_examples(o.manifest, parse_split(o.split), fx);
  for (const auto& w : wavs) {
    inputs.push_back(train::make_example(std::filesystem::path(w).stem().string(),
                                         dsp::read_wav(w, c.frontend.sample_rate), {}, fx));
  }
  if (inputs.empty()) throw ParameterError("nothing to score: give --manifest or WAV files");

  Output out(o.out);
  const double hop = static_cast<double>(c.frontend.hop_samples) / c.frontend.sample_rate;
  const std::string digest = c.model_digest();
  for (const auto& ex : inputs) {
    const eval::UtteranceResult r = pipeline::score_example(ex, params, c.model, c.gate_mode, c.detect_threshold);
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      json f;
      f["type"] = "frame";
      f["id"] = r.id;
      f["frame"] = i;
      f["time"] = static_cast<double>(i) * hop;
      f["score"] = r.scores[i];
      out.stream() << f.dump() << "\n";
    }
    json u;
    u["type"] = "utterance";
    u["id"] = r.id;
    u["frames"] = r.scores.size();
    u["spans"] = span_list(r.predicted);
    std::vector<int> hf_on;
    for (int g : r.gate) hf_on.push_back(g == gating::kHfOn ? 1 : 0);
    u["hf_on"] = hf_on;
    u["gate_mode"] = model::to_string(c.gate_mode);
    u["config_digest"] = digest;
    out.stream() << u.dump() << "\n";
  }
  return 0;
}

int cmd_eval(const Common& o, const std::string& scores_path) {
  const config::RunConfig c = resolve_config(o);
  if (o.manifest.empty()) throw ParameterError("--manifest is required");
  if (scores_path.empty()) throw ParameterError("--scores is required");
  const auto records = corpus::read_manifest(o.manifest);
  std::map<std::string, const corpus::UtteranceRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;

  std::ifstream in(scores_path);
  if (!in) throw IoError(fmt::format("cannot read {}", scores_path));
  std::map<std::string, eval::UtteranceResult> results;
  std::vector<std::string> order;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(fmt::format("{}:{}: {}", scores_path, line_no, e.what()));
    }
    const std::string id = j.at("id").get<std::string>();
    auto [it, fresh] = results.try_emplace(id);
    if (fresh) order.push_back(id);
    eval::UtteranceResult& r = it->second;
    r.id = id;
    if (j.at("type") == "frame") {
      if (j.at("frame").get<std::size_t>() != r.scores.size()) {
        throw ContractError(fmt::format("{}:{}: frames of '{}' out of order", scores_path, line_no, id));
      }
      r.scores.push_back(j.at("score").get<double>());
    } else {
      for (const auto& s : j.at("spans")) r.predicted.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
      for (int on : j.at("hf_on").get<std::vector<int>>()) r.gate.push_back(on ? gating::kHfOn : gating::kHfOff);
    }
  }

  std::vector<std::string> missing;
  for (const auto& id : order) {
    if (!by_id.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw ContractError(fmt::format("{} scored ids are not in the manifest: {}", missing.size(),
                                    fmt::join(missing, ", ")));
  }
  std::vector<eval::UtteranceResult> list;
  const double hop = static_cast<double>(c.frontend.hop_samples) / c.frontend.sample_rate;
  for (const auto& id : order) {
    eval::UtteranceResult r = std::move(results[id]);
    const auto& rec = *by_id[id];
    r.truth = rec.fake_spans;
    r.labels = corpus::record_frame_labels(rec, r.scores.size(), hop);
    list.push_back(std::move(r));
  }
  const double window_seconds = hop * c.model.fine_factor;
  const eval::MetricsReport m = eval::summarize(list, window_seconds);

  json j;
  j["utterances"] = m.utterances;
  j["frames"] = m.frames;
  j["frame_eer"] = m.frame_eer;
  j["utterance_eer"] = std::isnan(m.utterance_eer) ? json(nullptr) : json(m.utterance_eer);
  j["mean_iou"] = m.mean_iou;
  j["activation_rate"] = m.activation_rate;
  j["boundary_near_rate"] = m.boundary.near_rate();
  j["boundary_far_rate"] = m.boundary.far_rate();
  j["config_digest"] = c.model_digest();
  Output out(o.out);
  out.stream() << j.dump() << "\n";
  std::ostream& table = out.to_stdout() ? std::cerr : std::cout;
  table << fmt::format("{:<22}{:>12}\n", "metric", "value");
  table << fmt::format("{:<22}{:>12}\n", "utterances", m.utterances);
  table << fmt::format("{:<22}{:>12}\n", "frames", m.frames);
  table << fmt::format("{:<22}{:>11.2f}%\n", "frame EER", m.frame_eer);
  table << fmt::format("{:<22}{:>11.2f}%\n", "utterance EER", m.utterance_eer);
  table << fmt::format("{:<22}{:>12.3f}\n", "mean span IoU", m.mean_iou);
  table << fmt::format("{:<22}{:>12.3f}\n", "activation rate", m.activation_rate);
  table << fmt::format("{:<22}{:>12.3f}\n", "gate-on near edges", m.boundary.near_rate());
  table << fmt::format("{:<22}{:>12.3f}\n", "gate-on elsewhere", m.boundary.far_rate());
  return 0;
}

json mode_json(const eval::ModeReport& m) {
  json j;
  j["median_seconds"] = m.median_seconds;
  j["measured_macs"] = m.measured_macs;
  j["predicted_macs"] = m.predicted_macs;
  j["windows"] = m.windows;
  j["active_windows"] = m.active;
  j["activation_rate"] = m.activation();
  return j;
}

int cmd_bench(const Common& o, int limit) {
  const config::RunConfig c = resolve_config(o);
  const model::PfdParams params = load_params(o.checkpoint, c);
  if (o.manifest.empty()) throw ParameterError("--manifest is required");
  const dsp::FeatureExtractor fx(c.frontend);
  auto examples = pipeline::load_examples(o.manifest, parse_split(o.split), fx);
  if (limit > 0 && static_cast<std::size_t>(limit) < examples.size()) examples.resize(limit);
  std::vector<dsp::FrameFeatures> features;
  for (auto& ex : examples) features.push_back(std::move(ex.features));

  const eval::BenchReport rep = eval::bench_speedup(params, c.model, features, c.bench_repeats, c.gate_mode);
  const model::CostModel cost = model::cost_model(params, c.model);
  const double T = static_cast<double>(rep.gated.windows);
  const double p = rep.gated.activation();
  const double hf_window = static_cast<double>(cost.fine_factor * cost.hf_per_frame);
  json j;
  j["gated"] = mode_json(rep.gated);
  j["always_hf"] = mode_json(rep.always_hf);
  j["lf_only"] = mode_json(rep.lf_only);
  j["gate_mode"] = model::to_string(c.gate_mode);
  j["activation_rate"] = p;
  j["wall_speedup"] = rep.wall_speedup();
  j["flop_ratio"] = rep.flop_ratio();
  const double lf = T * static_cast<double>(cost.lf_per_window);
  j["formula_ratio"] = (lf + T * hf_window) / (lf + p * T * hf_window);
  j["c_lf"] = cost.lf_per_window;
  j["c_hf"] = cost.hf_per_frame;
  j["utterances"] = features.size();
  j["config_digest"] = c.model_digest();
  Output out(o.out);
  out.stream() << j.dump() << "\n";
  std::ostream& table = out.to_stdout() ? std::cerr : std::cout;
  table << fmt::format("{:<12}{:>14}{:>18}{:>8}\n", "mode", "median s", "MACs", "p");
  for (const auto& [name, m] : {std::pair{"gated", rep.gated}, {"always_hf", rep.always_hf}, {"lf_only", rep.lf_only}}) {
    table << fmt::format("{:<12}{:>14.4f}{:>18}{:>8.3f}\n", name, m.median_seconds, m.measured_macs, m.activation());
  }
  table << fmt::format("wall-clock speed-up {:.2f}x, FLOP ratio {:.2f}x\n", rep.wall_speedup(), rep.flop_ratio());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("pfd"));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  CLI::App app{"Partial-fake speech detection: data generation, training, detection, evaluation"};
  app.require_subcommand(1);
  Common o;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed (overrides the config)");
    sub->add_option("--set", o.overrides, "extra key=value overrides, applied last");
    sub->add_option("--out", o.out, "output path");
    sub->add_flag("-v,--verbose", o.verbose, "debug logging");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus and its manifest");
  add_common(gen);

  auto* train_cmd = app.add_subcommand("train", "train a model on a manifest");
  add_common(train_cmd);
  train_cmd->add_option("--manifest", o.manifest, "manifest.jsonl")->required();
  train_cmd->add_option("--checkpoint", o.checkpoint, "trainer checkpoint to resume from");

  std::vector<std::string> wavs;
  auto* detect = app.add_subcommand("detect", "score frames and predict fake spans");
  add_common(detect);
  detect->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  detect->add_option("--manifest", o.manifest, "score the utterances of a manifest");
  detect->add_option("--split", o.split, "train, val, test or all")->capture_default_str();
  detect->add_option("wavs", wavs, "WAV files to score");

  std::string scores;
  auto* eval_cmd = app.add_subcommand("eval", "metrics for detect output against a manifest");
  add_common(eval_cmd);
  eval_cmd->add_option("--scores", scores, "detect output")->required();
  eval_cmd->add_option("--manifest", o.manifest, "manifest.jsonl")->required();

  int limit = 0;
  auto* bench = app.add_subcommand("bench", "gated vs always-on inference cost");
  add_common(bench);
  bench->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  bench->add_option("--manifest", o.manifest, "manifest.jsonl")->required();
  bench->add_option("--split", o.split, "train, val, test or all")->capture_default_str();
  bench->add_option("--limit", limit, "use at most this many utterances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*gen) return cmd_gen_data(o);
    if (*train_cmd) return cmd_train(o);
    if (*detect) return cmd_detect(o, wavs);
    if (*eval_cmd) return cmd_eval(o, scores);
    if (*bench) return cmd_bench(o, limit);
  } catch (const DigestMismatch& e) {
    spdlog::error("{}", e.what());
    return kExitDigest;
  } catch (const ParameterError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
  return kExitUsage;
}
