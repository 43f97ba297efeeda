#include <cmath>
#include <sstream>

#include "doctest.h"
#include "isa/errors.hpp"
#include "isa/scorer.hpp"
#include "support/reference.hpp"
#include "support/tempdir.hpp"

using namespace isa;
using namespace std::chrono_literals;

namespace {

std::string stub(const std::string& args) { return std::string(STUB_SCORER) + " " + args; }

ScoringContext ctx_for(const std::string& id, double D, const SegmentSet* gt = nullptr) {
  ScoringContext c;
  c.utt_id = id;
  c.audio_path = id + ".wav";
  c.duration = D;
  c.ground_truth = gt;
  return c;
}

std::vector<TimeSegment> some_windows(ref::Rng& rng, double D, int n) {
  std::vector<TimeSegment> w;
  for (int i = 0; i < n; ++i) w.push_back(ref::random_segment(rng, D));
  return w;
}

class NanScorer final : public Scorer {
 public:
  std::string describe() const override { return "nan"; }
  double score(const ScoringContext&, const TimeSegment&) const override { return std::nan(""); }
};

}  // namespace

TEST_CASE("constant scorer") {
  ConstantScorer s(0.5);
  auto ctx = ctx_for("u", 10);
  std::vector<TimeSegment> w{{0, 1}, {1, 2}, {2, 3}};
  auto out = score_windows(s, ctx, w);
  REQUIRE(out.size() == 3);
  for (const auto& r : out) CHECK(r.score == 0.5);
  CHECK(out[1].request.start == 1.0);
  CHECK(out[1].request.utt_id == "u");
  CHECK_THROWS_AS(ConstantScorer(1.5), std::invalid_argument);
}

TEST_CASE("oracle examples") {
  SegmentSet gt{{{1.5, 2.2}}, 8};
  OracleConfig half{0.5, 0.0, {}};
  CHECK(oracle_score(gt, {1.5, 2.0}, half) == 1.0);
  CHECK(oracle_score(gt, {0.0, 0.5}, OracleConfig{}) == 0.0);
  CHECK(oracle_score(gt, {1.3, 1.8}, half) == 1.0);  // 0.3 / 0.5 = 0.6
  CHECK(oracle_score(gt, {1.0, 1.8}, half) == 0.0);  // 0.3 / 0.8
  CHECK(oracle_score(gt, {1.0, 1.5}, OracleConfig{}) == 0.0);  // touching only
  CHECK(oracle_score(gt, {1.0, 1.51}, OracleConfig{}) == 1.0);
  CHECK(oracle_score({{}, 8}, {1.0, 2.0}, OracleConfig{}) == 0.0);
}

TEST_CASE("noiseless oracle matches the reference overlap test") {
  ref::Rng rng(17);
  OracleScorer s(OracleConfig{});
  for (int t = 0; t < 300; ++t) {
    auto u = ref::tamper_fixture(rng, "u");
    auto ctx = ctx_for("u", u.duration, &u.ground_truth);
    auto w = some_windows(rng, u.duration, 20);
    auto scores = s.score_batch(ctx, w, Execution::Serial);
    for (std::size_t i = 0; i < w.size(); ++i)
      REQUIRE(scores[i] == ref::oracle(u.ground_truth.segments, w[i].start, w[i].end));
  }
}

TEST_CASE("noisy oracle is seeded, order-free and clipped") {
  SegmentSet gt{{{1.0, 2.0}}, 5};
  CHECK_THROWS_AS(oracle_score(gt, {0, 1}, OracleConfig{0.0, 0.2, std::nullopt}), std::invalid_argument);
  OracleConfig cfg{0.0, 0.3, 42};
  OracleScorer s(cfg);
  auto ctx = ctx_for("u", 5, &gt);
  ref::Rng rng(2);
  auto w = some_windows(rng, 5, 200);
  auto a = s.score_batch(ctx, w, Execution::Serial);
  auto b = s.score_batch(ctx, w, Execution::Parallel);
  CHECK(a == b);
  std::vector<TimeSegment> rev(w.rbegin(), w.rend());
  auto c = s.score_batch(ctx, rev, Execution::Serial);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(c[w.size() - 1 - i] == a[i]);
  bool varied = false;
  for (double v : a) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (v != 0.0 && v != 1.0) varied = true;
  }
  CHECK(varied);
  OracleScorer other(OracleConfig{0.0, 0.3, 43});
  CHECK(other.score_batch(ctx, w, Execution::Serial) != a);
}

TEST_CASE("energy score") {
  auto constant = [](float v) { return AudioBuffer(std::vector<float>(1600, v), 16000); };
  double silent = energy_score(constant(0.0f));
  std::vector<float> sq(1600);
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (i / 8) % 2 ? 1.0f : -1.0f;
  double loud = energy_score(AudioBuffer(sq, 16000));
  double mid = energy_score(constant(0.1f));  // -20 dBFS
  CHECK(silent <= 0.01);
  CHECK(loud >= 0.99);
  CHECK(mid > silent);
  CHECK(mid < loud);
  // logistic at -20 dB
  CHECK(mid == doctest::Approx(1.0 / (1.0 + std::exp(-(-20.0 - kEnergyCenterDb) / kEnergySlopeDb))));
  CHECK_THROWS_AS(energy_score(AudioBuffer({}, 16000)), EmptyBufferError);
}

TEST_CASE("energy scorer reads the audio") {
  std::vector<float> s(32000, 0.0f);
  for (std::size_t i = 16000; i < 32000; ++i) s[i] = 0.5f;
  AudioBuffer audio(s, 16000);
  EnergyScorer e;
  auto ctx = ctx_for("u", 2.0);
  ctx.audio = &audio;
  CHECK(e.score(ctx, {0.0, 0.5}) < 0.01);
  CHECK(e.score(ctx, {1.2, 1.7}) > 0.99);
  auto ctx_no_audio = ctx_for("u", 2.0);
  CHECK_THROWS(e.score(ctx_no_audio, {0, 1}));
}

TEST_CASE("precomputed lookup") {
  ScoreTable t;
  t.insert("u1", 0.25, 0.75, 0.9);
  CHECK(precomputed_lookup(t, {"u1", "", 0.25, 0.75}) == 0.9);
  CHECK(precomputed_lookup(t, {"u1", "", 0.2500001, 0.75}) == 0.9);
  CHECK_THROWS_AS(precomputed_lookup(t, {"u1", "", 0.30, 0.80}), MissingScoreError);
  CHECK_THROWS_AS(precomputed_lookup(t, {"u2", "", 0.25, 0.75}), MissingScoreError);
}

TEST_CASE("score file round-trip") {
  std::vector<WindowScore> rows{{{"a", "a.wav", 0.0, 0.5}, 0.25}, {{"b", "b.wav", 1.0, 1.5}, 1.0}};
  std::stringstream ss;
  write_score_file(ss, rows);
  auto t = ScoreTable::parse(ss);
  CHECK(t.size() == 2);
  CHECK(t.lookup("a", 0.0, 0.5) == 0.25);
  CHECK(t.lookup("b", 1.0, 1.5) == 1.0);
  std::istringstream bad("{\"utt_id\":\"a\",\"start\":0,\"end\":1}\n");
  CHECK_THROWS_AS(ScoreTable::parse(bad), DataError);
}

TEST_CASE("score_windows rejects invalid scores") {
  NanScorer n;
  auto ctx = ctx_for("u", 1);
  std::vector<TimeSegment> w{{0, 1}};
  CHECK_THROWS_AS(score_windows(n, ctx, w), ProtocolError);
}

TEST_CASE("parallel batch equals serial") {
  SegmentSet gt{{{2.0, 2.4}, {5.0, 6.0}}, 10};
  OracleScorer s(OracleConfig{0.5, 0.1, 9});
  auto ctx = ctx_for("u", 10, &gt);
  ref::Rng rng(4);
  auto w = some_windows(rng, 10, 1000);
  CHECK(s.score_batch(ctx, w, Execution::Serial) == s.score_batch(ctx, w, Execution::Parallel));
}

TEST_CASE("make_scorer specs") {
  CHECK(make_scorer("oracle")->needs_ground_truth());
  CHECK(make_scorer("energy")->needs_audio());
  CHECK(make_scorer("constant:0.25")->score(ctx_for("u", 1), {0, 1}) == 0.25);
  CHECK_THROWS_AS(make_scorer("oracle:0.1"), std::invalid_argument);  // noise needs a seed
  CHECK(make_scorer("oracle:0.1", 7) != nullptr);
  CHECK(make_scorer("oracle:0:0.5")->describe().find("0.5") != std::string::npos);
  CHECK_THROWS_AS(make_scorer("nonsense"), std::invalid_argument);
  CHECK_THROWS_AS(make_scorer("constant:abc"), std::invalid_argument);
  CHECK_THROWS_AS(make_scorer("precomputed:/nonexistent.jsonl"), DataError);
}

TEST_CASE("external scorer: constant stub") {
  ExternalScorer s(stub("constant 0.5"));
  auto ctx = ctx_for("u", 10);
  std::vector<TimeSegment> w{{0, 0.5}, {0.25, 0.75}, {0.5, 1.0}};
  for (double v : s.score_batch(ctx, w, Execution::Serial)) CHECK(v == 0.5);
  CHECK(s.score(ctx, {1, 2}) == 0.5);
}

TEST_CASE("external scorer matches responses by id") {
  ExternalScorer s(stub("by_start"));
  auto ctx = ctx_for("u", 10);
  std::vector<TimeSegment> w;
  for (int k = 0; k < 39; ++k) w.push_back({k * 0.25, k * 0.25 + 0.5});
  auto got = s.score_batch(ctx, w, Execution::Serial);
  REQUIRE(got.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    double x = w[i].start * 7.31;
    CHECK(got[i] == doctest::Approx(x - std::floor(x)).epsilon(1e-12));
  }
  // parallel callers each borrow a process
  auto par = s.score_batch(ctx, w, Execution::Parallel);
  CHECK(par == got);
}

TEST_CASE("external scorer failures") {
  auto ctx = ctx_for("u", 10);
  std::vector<TimeSegment> w{{0, 0.5}, {0.25, 0.75}};
  CHECK_THROWS_AS(ExternalScorer(stub("range")).score_batch(ctx, w, Execution::Serial), ProtocolError);
  CHECK_THROWS_AS(score_windows(ExternalScorer(stub("range")), ctx, w), ProtocolError);
  CHECK_THROWS_AS(ExternalScorer(stub("garbage")).score_batch(ctx, w, Execution::Serial), ProtocolError);
  CHECK_THROWS_AS(ExternalScorer(stub("error")).score_batch(ctx, w, Execution::Serial), ScorerError);
  CHECK_THROWS_AS(ExternalScorer(stub("die")).score_batch(ctx, w, Execution::Serial), ScorerUnavailableError);
  CHECK_THROWS_AS(ExternalScorer(stub("stall"), 300ms).score_batch(ctx, w, Execution::Serial), TimeoutError);
  CHECK_THROWS_AS(ExternalScorer("/nonexistent/scorer-binary").score_batch(ctx, w, Execution::Serial),
                  ScorerUnavailableError);
}

TEST_CASE("external scorer recovers after a failed process") {
  // The first process dies; the pool drops it and the next batch starts fresh.
  TempDir dir;
  std::string flag = dir.file("died");
  std::string cmd = "if [ -e " + flag + " ]; then exec " + stub("constant 0.75") + "; else touch " + flag +
                    "; exec " + stub("die") + "; fi";
  ExternalScorer s(cmd);
  auto ctx = ctx_for("u", 10);
  std::vector<TimeSegment> w{{0, 0.5}};
  CHECK_THROWS_AS(s.score_batch(ctx, w, Execution::Serial), ScorerUnavailableError);
  CHECK(s.score_batch(ctx, w, Execution::Serial) == std::vector<double>{0.75});
}
