#include "doctest.h"

#include "pfd/config.hpp"
#include "pfd/error.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace pfd;
using namespace pfd::config;

TEST_SUITE("cli") {

TEST_CASE("every key round trips through its text form") {
  RunConfig c;
  for (const auto& key : RunConfig::keys()) {
    RunConfig d;
    d.set(key, c.get(key));
    CHECK(d.get(key) == c.get(key));
  }
  RunConfig e;
  e.set("hidden", "17");
  e.set("lambda", "0.25");
  e.set("mean_fine_loss", "false");
  e.set("gate_mode", "always_on");
  e.set("mode_weights", "1,2,3");
  RunConfig f;
  apply_text(f, e.to_text());
  CHECK(f.to_text() == e.to_text());
  CHECK(f.model.hidden == 17);
  CHECK(f.model.lambda == 0.25);
  CHECK_FALSE(f.model.mean_fine_loss);
  CHECK(f.gate_mode == model::GateMode::ForceOn);
}

TEST_CASE("unknown, repeated and malformed entries are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("no_such_key", "1"), ParameterError);
  CHECK_THROWS_AS(c.get("no_such_key"), ParameterError);
  CHECK_THROWS_AS(c.set("hidden", "12x"), ParameterError);
  CHECK_THROWS_AS(c.set("hidden", ""), ParameterError);
  CHECK_THROWS_AS(c.set("mean_fine_loss", "maybe"), ParameterError);
  CHECK_THROWS_AS(c.set("gate_mode", "sometimes"), ParameterError);
  CHECK_THROWS_AS(apply_text(c, "hidden = 4\nhidden = 5\n"), ParameterError);
  CHECK_THROWS_AS(apply_text(c, "hidden 4\n"), ParameterError);
  CHECK_THROWS_AS(apply_text(c, "bogus = 4\n"), ParameterError);
}

TEST_CASE("config text accepts comments and blank lines") {
  RunConfig c;
  apply_text(c, "# a comment\n\n  hidden = 9   # trailing\nseed=4\n");
  CHECK(c.model.hidden == 9);
  CHECK(c.seed == 4);
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / "pfd_test_config.txt";
  {
    std::ofstream f(path);
    f << "lambda = 1.5\nn_utterances = 40\n";
  }
  RunConfig c;
  apply_file(c, path);
  std::filesystem::remove(path);
  CHECK(c.model.lambda == 1.5);
  CHECK(c.corpus.n_utterances == 40);
  CHECK_THROWS_AS(apply_file(c, path), IoError);
}

TEST_CASE("environment overrides") {
  RunConfig c;
  ::setenv("PFD_HIDDEN", "33", 1);
  ::setenv("PFD_DETECT_THRESHOLD", "0.3", 1);
  const auto applied = apply_env(c);
  ::unsetenv("PFD_HIDDEN");
  ::unsetenv("PFD_DETECT_THRESHOLD");
  CHECK(applied.size() == 2);
  CHECK(c.model.hidden == 33);
  CHECK(c.detect_threshold == 0.3);
  ::setenv("PFD_HIDDEN", "abc", 1);
  CHECK_THROWS_AS(apply_env(c), ParameterError);
  ::unsetenv("PFD_HIDDEN");
}

TEST_CASE("resolve propagates shared values and validates") {
  RunConfig c;
  c.seed = 77;
  c.set("d_hf", "40");
  c.set("fine_factor", "50");
  c.resolve();
  CHECK(c.model.seed == 77);
  CHECK(c.corpus.seed == 77);
  CHECK(c.frontend.hf_mels == 40);
  CHECK(c.frontend.frames_per_window == 50);
  CHECK(c.corpus.digest == c.corpus_digest());

  RunConfig bad;
  bad.set("gate_mode", "straight_through");
  CHECK_THROWS_AS(bad.resolve(), ParameterError);
  RunConfig bad2;
  bad2.set("detect_threshold", "1");
  CHECK_THROWS_AS(bad2.resolve(), ParameterError);
  RunConfig bad3;
  bad3.set("fmax", "9000");
  CHECK_THROWS_AS(bad3.resolve(), ParameterError);
}

TEST_CASE("digests track exactly the keys they cover") {
  RunConfig a, b;
  CHECK(a.model_digest() == b.model_digest());
  CHECK(a.model_digest().size() == 64);
  b.set("max_epochs", "3");
  b.set("detect_threshold", "0.4");
  b.set("n_utterances", "10");
  CHECK(a.model_digest() == b.model_digest());
  b.set("hidden", "64");
  CHECK(a.model_digest() != b.model_digest());
  b.set("hop_samples", "80");
  RunConfig c;
  c.set("hop_samples", "80");
  CHECK(a.model_digest() != c.model_digest());

  RunConfig d, e;
  e.set("lambda", "2");
  CHECK(d.corpus_digest() == e.corpus_digest());
  e.seed = 1;
  CHECK(d.corpus_digest() != e.corpus_digest());
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // TEST_SUITE
