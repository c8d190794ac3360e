#include "doctest.h"

#include "pfd/edit.hpp"
#include "pfd/error.hpp"

#include <cmath>
#include <random>

using namespace pfd;
using namespace pfd::edit;

namespace {

constexpr int kRate = 16000;

Transcript random_transcript(Rng& rng, std::size_t n_tokens) {
  std::uniform_real_distribution<double> gap(0.03, 0.2), len(0.1, 0.4);
  Transcript w;
  double t = gap(rng);
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const double d = len(rng);
    w.tokens.push_back({"w" + std::to_string(i), t, t + d});
    t += d + gap(rng);
  }
  return w;
}

dsp::Waveform random_audio(double seconds, Rng& rng) {
  std::normal_distribution<double> d(0.0, 0.2);
  dsp::Waveform x;
  x.samples.resize(static_cast<std::size_t>(seconds * kRate));
  for (double& s : x.samples) s = d(rng);
  return x;
}

class NoiseSynthesizer final : public Synthesizer {
 public:
  explicit NoiseSynthesizer(std::uint64_t seed) : seed_(seed) {}
  dsp::Waveform synthesize(const dsp::Waveform&, const Span& target,
                           const std::string& text) const override {
    Rng rng(seed_ + static_cast<std::uint64_t>(target.start * 1000) + text.size());
    std::uniform_real_distribution<double> len(0.05, 0.5);
    return random_audio(len(rng), rng);
  }

 private:
  std::uint64_t seed_;
};

std::size_t to_samples(double seconds) { return static_cast<std::size_t>(std::lround(seconds * kRate)); }

}  // namespace

TEST_SUITE("edit_pipeline") {

TEST_CASE("mode names round trip") {
  for (EditMode m : {EditMode::Inversion, EditMode::Insertion, EditMode::Deletion}) {
    CHECK(edit_mode_from_string(to_string(m)) == m);
  }
  CHECK_THROWS(edit_mode_from_string("swap"));
}

TEST_CASE("plan validation") {
  Rng rng(1);
  const Transcript w = random_transcript(rng, 3);
  CHECK_THROWS_AS((EditPlan{EditMode::Inversion, 3, "x"}.validate(w)), ContractError);
  CHECK_THROWS_AS((EditPlan{EditMode::Inversion, 0, "x"}.validate(Transcript{})), ContractError);
  CHECK_THROWS_AS((EditPlan{EditMode::Inversion, 0, ""}.validate(w)), ParameterError);
  CHECK_THROWS_AS((EditPlan{EditMode::Deletion, 0, "x"}.validate(w)), ParameterError);
  CHECK_NOTHROW((EditPlan{EditMode::Deletion, 2, ""}.validate(w)));
}

TEST_CASE("transcript validation") {
  Transcript w;
  w.tokens = {{"a", 0.5, 0.4}};
  CHECK_THROWS_AS(w.validate(), ContractError);
  w.tokens = {{"a", 0.1, 0.4}, {"b", 0.3, 0.6}};
  CHECK_THROWS_AS(w.validate(), ContractError);
  w.tokens = {{"a", 0.1, 0.4}, {"b", 0.4, 0.6}};
  CHECK_NOTHROW(w.validate());
}

TEST_CASE("insertion point is the middle of the preceding gap") {
  Transcript w;
  w.tokens = {{"a", 0.2, 0.5}, {"b", 0.7, 1.0}};
  CHECK(insertion_point(w, 0) == doctest::Approx(0.1));
  CHECK(insertion_point(w, 1) == doctest::Approx(0.6));
}

TEST_CASE("manipulated transcripts") {
  Transcript w;
  w.tokens = {{"a", 0.2, 0.5}, {"b", 0.7, 1.0}, {"c", 1.2, 1.4}};
  const Transcript inv = build_manipulated_transcript(w, {EditMode::Inversion, 1, "x"}, 0.5);
  REQUIRE(inv.size() == 3);
  CHECK(inv.tokens[1] == Token{"x", 0.7, 1.2});
  CHECK(inv.tokens[2].start == doctest::Approx(1.4));
  const Transcript same = build_manipulated_transcript(w, {EditMode::Inversion, 1, "x"});
  CHECK(same.tokens[2] == w.tokens[2]);

  const Transcript ins = build_manipulated_transcript(w, {EditMode::Insertion, 1, "x"}, 0.1);
  REQUIRE(ins.size() == 4);
  CHECK(ins.tokens[1].text == "x");
  CHECK(ins.tokens[1].start == doctest::Approx(0.6));
  CHECK(ins.tokens[2].start == doctest::Approx(0.8));

  const Transcript del = build_manipulated_transcript(w, {EditMode::Deletion, 1, ""});
  REQUIRE(del.size() == 2);
  CHECK(del.tokens[0] == w.tokens[0]);
  CHECK(del.tokens[1].text == "c");
  CHECK(del.tokens[1].start == doctest::Approx(0.9));
}

TEST_CASE("target selection") {
  Transcript w;
  w.tokens = {{"the", 0.1, 0.2}, {"zebra", 0.3, 0.4}, {"a", 0.5, 0.6}, {"yak", 0.7, 0.8}};
  CHECK(select_target(w, FixedIndexSelector(1)) == 1);
  CHECK(select_target(w, FixedIndexSelector(99)) == 3);
  const RarestTokenSelector rare({{"the", 50}, {"zebra", 2}, {"a", 40}, {"yak", 2}});
  CHECK(select_target(w, rare) == 1);
  const RarestTokenSelector unseen({{"the", 50}, {"zebra", 2}, {"a", 40}});
  CHECK(select_target(w, unseen) == 3);

  Transcript v;
  v.tokens = {{"the", 0.1, 0.2}, {"the", 0.3, 0.4}, {"yak", 0.5, 0.6}};
  const auto counted = RarestTokenSelector::from_corpus({w, v});
  CHECK(select_target(w, counted) == 1);
  CHECK_THROWS_AS(select_target(Transcript{}, rare), ContractError);
}

TEST_CASE("manifest transcriber") {
  ManifestTranscriber t;
  Transcript w;
  w.tokens = {{"a", 0.1, 0.2}};
  t.add("u1", w);
  CHECK(t.transcribe("u1", dsp::Waveform{}) == w);
  CHECK_THROWS(t.transcribe("u2", dsp::Waveform{}));
}

TEST_CASE("crossfade splice") {
  dsp::Waveform a, b;
  a.samples.assign(300, 1.0);
  b.samples.assign(200, 1.0);
  const auto joined = crossfade_splice(a, b, 100);
  CHECK(joined.samples.size() == 400);
  for (double s : joined.samples) CHECK(s == doctest::Approx(1.0));

  b.samples.assign(200, -1.0);
  const auto plain = crossfade_splice(a, b, 0);
  CHECK(plain.samples.size() == 500);
  CHECK(plain.samples[299] == 1.0);
  CHECK(plain.samples[300] == -1.0);

  const auto ramp = crossfade_splice(a, b, 100);
  for (std::size_t i = 201; i < 300; ++i) CHECK(ramp.samples[i] < ramp.samples[i - 1]);

  CHECK_THROWS_AS(crossfade_splice(a, b, 250), ParameterError);
  dsp::Waveform c = b;
  c.sample_rate = 8000;
  CHECK_THROWS_AS(crossfade_splice(a, c, 10), ParameterError);
}

TEST_CASE("trim silence") {
  dsp::Waveform x;
  x.samples = {0.0, 0.001, 0.5, 0.0, -0.4, 0.002, 0.0};
  const auto t = trim_silence(x, 0.01);
  CHECK(t.samples == std::vector<double>{0.5, 0.0, -0.4});
  CHECK(trim_silence(x, 0.0).samples.size() == 5);
  CHECK_THROWS_AS(trim_silence(x, -1.0), ParameterError);
  CHECK_THROWS_AS(trim_silence(x, 1.0), TooShortError);
}

TEST_CASE("pass-through inversion with the same text reproduces the input") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Transcript w = random_transcript(rng, 5);
    const dsp::Waveform x = random_audio(w.tokens.back().end + 0.2, rng);
    const std::size_t target = trial % 5;
    const auto r = render_deepfake(x, w, {EditMode::Inversion, target, w.tokens[target].text},
                                   PassThroughSynthesizer{});
    REQUIRE(r.audio.samples.size() == x.samples.size());
    for (std::size_t i = 0; i < x.samples.size(); ++i) {
      CHECK(r.audio.samples[i] == doctest::Approx(x.samples[i]).epsilon(1e-12).scale(1.0));
    }
    REQUIRE(r.transcript.size() == w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      CHECK(r.transcript.tokens[k].text == w.tokens[k].text);
      CHECK(std::abs(r.transcript.tokens[k].start - w.tokens[k].start) <= 1.0 / kRate);
      CHECK(std::abs(r.transcript.tokens[k].end - w.tokens[k].end) <= 1.0 / kRate);
    }
  }
}

TEST_CASE("rendered audio outside the fake span is the untouched input") {
  Rng rng(3);
  std::uniform_int_distribution<int> n_tokens(1, 8);
  const NoiseSynthesizer phi(99);
  for (int trial = 0; trial < 90; ++trial) {
    const auto mode = static_cast<EditMode>(trial % 3);
    const Transcript w = random_transcript(rng, n_tokens(rng));
    const dsp::Waveform x = random_audio(w.tokens.back().end + 0.15, rng);
    std::uniform_int_distribution<std::size_t> pick(0, w.size() - 1);
    const EditPlan plan{mode, pick(rng), mode == EditMode::Deletion ? "" : "fake"};
    CAPTURE(trial);
    const RenderResult r = render_deepfake(x, w, plan, phi);

    const std::size_t n = x.samples.size(), m = r.audio.samples.size();
    REQUIRE(r.fake_begin <= r.fake_end);
    REQUIRE(r.fake_end <= m);
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(m) - static_cast<std::ptrdiff_t>(n);
    for (std::size_t i = 0; i < r.fake_begin; ++i) REQUIRE(r.audio.samples[i] == x.samples[i]);
    for (std::size_t i = r.fake_end; i < m; ++i) {
      REQUIRE(r.audio.samples[i] == x.samples[static_cast<std::ptrdiff_t>(i) - shift]);
    }

    REQUIRE(r.fake_spans.size() == 1);
    CHECK(r.fake_spans[0].start == doctest::Approx(static_cast<double>(r.fake_begin) / kRate));
    CHECK(r.fake_spans[0].end == doctest::Approx(static_cast<double>(r.fake_end) / kRate));
    for (const auto& [b, e] : r.ramps) {
      CHECK(b >= r.fake_begin);
      CHECK(e <= r.fake_end);
      CHECK(b < e);
    }

    CHECK_NOTHROW(r.transcript.validate());
    const Token& t = w.tokens[plan.target];
    switch (mode) {
      case EditMode::Inversion:
        CHECK(r.transcript.size() == w.size());
        CHECK(r.transcript.tokens[plan.target].text == "fake");
        CHECK(r.fake_begin == to_samples(t.start));
        CHECK(shift == static_cast<std::ptrdiff_t>(r.fake_end - r.fake_begin) -
                           static_cast<std::ptrdiff_t>(to_samples(t.end) - to_samples(t.start)));
        break;
      case EditMode::Insertion:
        CHECK(r.transcript.size() == w.size() + 1);
        CHECK(r.transcript.tokens[plan.target].text == "fake");
        CHECK(r.fake_begin == to_samples(insertion_point(w, plan.target)));
        CHECK(shift == static_cast<std::ptrdiff_t>(r.fake_end - r.fake_begin));
        break;
      case EditMode::Deletion:
        CHECK(r.transcript.size() == w.size() - 1);
        CHECK(shift == -static_cast<std::ptrdiff_t>(to_samples(t.end) - to_samples(t.start)));
        CHECK(r.fake_end - r.fake_begin <= 160);
        CHECK(r.fake_end > r.fake_begin);
        break;
    }
    for (std::size_t k = 0; k < r.transcript.size(); ++k) {
      CHECK(r.transcript.tokens[k].end <= static_cast<double>(m) / kRate + 1e-9);
    }
  }
}

TEST_CASE("fake span brackets the synthesized token") {
  Rng rng(4);
  const NoiseSynthesizer phi(7);
  const Transcript w = random_transcript(rng, 4);
  const dsp::Waveform x = random_audio(w.tokens.back().end + 0.2, rng);
  const auto r = render_deepfake(x, w, {EditMode::Inversion, 2, "new"}, phi);
  const Token& t = r.transcript.tokens[2];
  CHECK(r.fake_spans[0].start == doctest::Approx(t.start).epsilon(1e-3));
  CHECK(r.fake_spans[0].end == doctest::Approx(t.end).epsilon(1e-3));
}

TEST_CASE("render rejects out-of-range targets") {
  Rng rng(5);
  const Transcript w = random_transcript(rng, 2);
  const dsp::Waveform x = random_audio(w.tokens.back().end + 0.1, rng);
  CHECK_THROWS_AS(render_deepfake(x, w, {EditMode::Inversion, 5, "x"}, PassThroughSynthesizer{}),
                  ContractError);
  Transcript late = w;
  late.tokens.back().end = 99.0;
  CHECK_THROWS(render_deepfake(x, late, {EditMode::Deletion, 1, ""}, PassThroughSynthesizer{}));
}

}  // TEST_SUITE
