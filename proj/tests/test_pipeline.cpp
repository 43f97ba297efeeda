#include <cmath>

#include "doctest.h"
#include "isa/pipeline.hpp"
#include "support/reference.hpp"

using namespace isa;

namespace {

ScoringContext ctx_for(const UtteranceRecord& u) {
  ScoringContext c;
  c.utt_id = u.utt_id;
  c.audio_path = u.audio_path;
  c.duration = u.duration;
  c.ground_truth = &u.ground_truth;
  return c;
}

UtteranceRecord utt(double D, std::vector<TimeSegment> segs) {
  UtteranceRecord u;
  u.utt_id = "u";
  u.duration = D;
  u.ground_truth = {std::move(segs), D};
  u.variant = variant_for_count(u.ground_truth.count());
  return u;
}

std::vector<std::size_t> starts_as_steps(const std::vector<TimeSegment>& g, double S) {
  std::vector<std::size_t> k;
  for (const auto& w : g) k.push_back(static_cast<std::size_t>(std::llround(w.start / S)));
  return k;
}

}  // namespace

TEST_CASE("coarse grid examples") {
  CHECK(coarse_grid(10.0, 0.5, 0.25, false).size() == 39);
  auto one = coarse_grid(0.5, 0.5, 0.25, false);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == TimeSegment{0.0, 0.5});
  auto three = coarse_grid(1.0, 0.5, 0.25, false);
  CHECK(starts_as_steps(three, 0.25) == std::vector<std::size_t>{0, 1, 2});
  auto shorter = coarse_grid(0.3, 0.5, 0.25, true);
  REQUIRE(shorter.size() == 1);
  CHECK(shorter[0] == TimeSegment{0.0, 0.3});
  // 10.1 s leaves 0.1 s unscanned without the tail window
  auto g = coarse_grid(10.1, 0.5, 0.25, true);
  CHECK(g.size() == 40);
  CHECK(g.back().end == doctest::Approx(10.1));
  CHECK(coarse_grid(10.0, 0.5, 0.25, true).size() == 39);  // already covered
}

TEST_CASE("grid properties over random shapes") {
  ref::Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    double W = rng.uniform(0.05, 2.0);
    double S = rng.uniform(0.01, W);
    double D = rng.uniform(W, 30.0);
    auto g = coarse_grid(D, W, S, false);
    REQUIRE(g.size() == static_cast<std::size_t>(std::floor((D - W) / S + 1e-9)) + 1);
    for (std::size_t k = 0; k < g.size(); ++k) {
      REQUIRE(g[k].start == doctest::Approx(static_cast<double>(k) * S).epsilon(1e-12));
      REQUIRE(g[k].duration() == doctest::Approx(W));
      if (k > 0) {
        REQUIRE(std::abs(g[k].start - g[k - 1].start - S) <= 1e-9);
        double overlap = g[k - 1].end - g[k].start;
        REQUIRE(std::abs(overlap - (W - S)) <= 1e-9);
      }
    }
    auto tail = coarse_grid(D, W, S, true);
    REQUIRE(tail.back().end == doctest::Approx(D));
    REQUIRE(tail.size() - g.size() <= 1);
  }
}

TEST_CASE("fine grid") {
  auto f = fine_grid({1.7, 2.8}, 0.15, 0.05);
  CHECK(f.size() == 20);
  CHECK(f.front().start == 1.7);
  for (const auto& w : f) {
    CHECK(w.start >= 1.7);
    CHECK(w.end <= 2.8 + 1e-12);
  }
}

TEST_CASE("flag_windows") {
  std::vector<double> c{0.1, 0.7, 0.65, 0.2};
  CHECK(flag_windows(c, 0.6) == std::vector<std::size_t>{2, 3});
  CHECK(flag_windows(c, 0.9).empty());
  std::vector<double> eq{0.6};
  CHECK(flag_windows(eq, 0.6) == std::vector<std::size_t>{1});
}

TEST_CASE("flagged set shrinks as the threshold rises") {
  ref::Rng rng(6);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> c(static_cast<std::size_t>(rng.integer(1, 60)));
    for (auto& v : c) v = rng.uniform(0, 1);
    double lo = rng.uniform(0, 1), hi = rng.uniform(lo, 1);
    auto a = flag_windows(c, lo), b = flag_windows(c, hi);
    REQUIRE(std::includes(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST_CASE("merge_flagged examples") {
  auto grid = coarse_grid(10.0, 0.5, 0.25, false);
  std::vector<std::size_t> f{2, 3, 7, 8};
  auto r = merge_flagged(f, 2, grid);
  REQUIRE(r.size() == 2);
  CHECK(r[0].cluster == std::vector<std::size_t>{2, 3});
  CHECK(r[1].cluster == std::vector<std::size_t>{7, 8});
  std::vector<std::size_t> f2{2, 3, 6};
  auto one = merge_flagged(f2, 2, grid);
  REQUIRE(one.size() == 1);
  CHECK(one[0].bounds == TimeSegment{0.25, 1.75});
  std::vector<std::size_t> f3{2, 3};
  CHECK(merge_flagged(f3, 2, grid)[0].bounds == TimeSegment{0.25, 1.0});
  CHECK(merge_flagged(f2, 0, grid).size() == 2);
  CHECK(merge_flagged({}, 2, grid).empty());
}

TEST_CASE("gap 0 merging is maximal contiguous runs") {
  ref::Rng rng(9);
  auto grid = coarse_grid(20.0, 0.5, 0.25, false);
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::size_t> f;
    for (std::size_t k = 1; k <= grid.size(); ++k)
      if (rng.coin(0.3)) f.push_back(k);
    std::vector<std::vector<std::size_t>> runs;
    for (std::size_t k : f) {
      if (runs.empty() || runs.back().back() + 1 != k) runs.push_back({});
      runs.back().push_back(k);
    }
    auto r = merge_flagged(f, 0, grid);
    REQUIRE(r.size() == runs.size());
    for (std::size_t i = 0; i < r.size(); ++i) REQUIRE(r[i].cluster == runs[i]);
  }
}

TEST_CASE("refine_region arithmetic") {
  // Fine windows 3..10 (1-based) scoring 1 over an extended interval starting at 1.0.
  class Indexed final : public Scorer {
   public:
    std::string describe() const override { return "indexed"; }
    double score(const ScoringContext&, const TimeSegment& w) const override {
      long k = std::lround((w.start - 1.0) / 0.05) + 1;
      return k >= 3 && k <= 10 ? 1.0 : 0.0;
    }
  } scorer;
  ScoringContext ctx;
  ctx.utt_id = "u";
  ctx.duration = 10;
  IsaParams p;
  CandidateRegion region{{1.3, 1.8}, {1}};
  auto out = refine_region(scorer, ctx, region, p, Execution::Serial);
  CHECK(out.extended == TimeSegment{1.0, 2.1});
  REQUIRE(out.segment);
  CHECK(out.segment->start == doctest::Approx(1.10));
  CHECK(out.segment->end == doctest::Approx(1.60));

  ConstantScorer low(0.5);
  CHECK_FALSE(refine_region(low, ctx, region, p, Execution::Serial).segment);
}

TEST_CASE("coarse scan against the oracle") {
  auto u = utt(10, {{2.0, 2.4}});
  OracleScorer oracle(OracleConfig{});
  IsaParams p;
  p.cover_tail = false;
  auto map = coarse_scan(oracle, ctx_for(u), p, Execution::Serial);
  REQUIRE(map.size() == 39);
  for (std::size_t k = 0; k < map.size(); ++k) {
    double t = map.windows[k].start;
    CHECK(map.scores[k] == (t > 1.5 && t < 2.4 ? 1.0 : 0.0));
  }
  ConstantScorer c(0.3);
  auto flat = coarse_scan(c, ctx_for(u), p);
  CHECK(flat.size() == 39);
  for (double v : flat.scores) CHECK(v == 0.3);
}

TEST_CASE("run_isa examples") {
  OracleScorer oracle(OracleConfig{});
  IsaParams p;
  auto genuine = utt(10, {});
  auto g = run_isa(oracle, ctx_for(genuine), p);
  CHECK(g.record.predictions.empty());
  CHECK(g.fine_calls == 0);

  auto one = utt(10, {{2.0, 2.4}});
  auto r = run_isa(oracle, ctx_for(one), p);
  REQUIRE(r.record.predictions.count() == 1);
  auto s = r.record.predictions.segments[0];
  CHECK(s.start <= 2.0);
  CHECK(s.end >= 2.4);
  CHECK(s.start > 2.0 - 0.2);
  CHECK(s.end < 2.4 + 0.2);
  CHECK(r.record.mode == InferenceMode::Isa);

  auto two = utt(10, {{2.0, 2.4}, {5.0, 5.5}});
  CHECK(run_isa(oracle, ctx_for(two), p).record.predictions.count() == 2);
}

TEST_CASE("run_isa equals the independent reference search") {
  ref::Rng rng(77);
  OracleScorer oracle(OracleConfig{});
  for (int t = 0; t < 300; ++t) {
    auto u = ref::tamper_fixture(rng, "u" + std::to_string(t), rng.uniform(0.1, 2.0), rng.uniform(0.0, 1.0));
    ref::Params rp;
    rp.g = rng.integer(0, 3);
    rp.tail = rng.coin();
    rp.refine = rng.coin(0.8);
    IsaParams p;
    p.merge_gap = rp.g;
    p.cover_tail = rp.tail;
    p.refine = rp.refine;
    auto expect = ref::isa_search(u.duration, rp, [&](double a, double b) {
      return ref::oracle(u.ground_truth.segments, a, b);
    });
    auto got = run_isa(oracle, ctx_for(u), p, t % 2 ? Execution::Serial : Execution::Parallel);
    REQUIRE(got.total_calls() == expect.calls);
    REQUIRE(got.record.predictions.count() == expect.segments.size());
    for (std::size_t i = 0; i < expect.segments.size(); ++i) {
      REQUIRE(got.record.predictions.segments[i].start == doctest::Approx(expect.segments[i].start).epsilon(1e-12));
      REQUIRE(got.record.predictions.segments[i].end == doctest::Approx(expect.segments[i].end).epsilon(1e-12));
    }
  }
}

TEST_CASE("refined segments stay inside their extended interval") {
  ref::Rng rng(31);
  for (int t = 0; t < 300; ++t) {
    auto u = ref::tamper_fixture(rng, "u", 0.3, 0.0);
    OracleScorer noisy(OracleConfig{0.0, 0.3, static_cast<std::uint64_t>(t)});
    auto r = run_isa(noisy, ctx_for(u), IsaParams{});
    for (const auto& o : r.refinements) {
      if (!o.segment) continue;
      REQUIRE(o.extended.start <= o.segment->start);
      REQUIRE(o.segment->start < o.segment->end);
      REQUIRE(o.segment->end <= o.extended.end);
    }
    const auto& segs = r.record.predictions.segments;
    for (std::size_t i = 1; i < segs.size(); ++i) REQUIRE(segs[i - 1].end < segs[i].start);
  }
}

TEST_CASE("oracle recovery property") {
  ref::Rng rng(404);
  OracleScorer oracle(OracleConfig{});
  IsaParams p;
  for (int t = 0; t < 300; ++t) {
    auto u = ref::tamper_fixture(rng, "u", 1.5, 1.0);
    auto r = run_isa(oracle, ctx_for(u), p);
    REQUIRE(r.record.predictions.count() == u.ground_truth.count());
    for (std::size_t i = 0; i < u.ground_truth.count(); ++i) {
      auto truth = u.ground_truth.segments[i];
      auto got = r.record.predictions.segments[i];
      REQUIRE(got.start <= truth.start + 1e-9);
      REQUIRE(got.end >= truth.end - 1e-9);
      REQUIRE(truth.start - got.start <= p.fine_window + p.fine_stride + 1e-9);
      REQUIRE(got.end - truth.end <= p.fine_window + p.fine_stride + 1e-9);
    }
  }
}

TEST_CASE("baselines") {
  OracleScorer oracle(OracleConfig{});
  IsaParams p;
  auto u = utt(10, {{2.0, 2.4}, {3.3, 3.5}});
  auto frame = run_baseline(oracle, ctx_for(u), p, InferenceMode::FrameLevel);
  auto coarse = run_baseline(oracle, ctx_for(u), p, InferenceMode::CoarseOnly);
  CHECK(frame.record.mode == InferenceMode::FrameLevel);
  CHECK(coarse.record.mode == InferenceMode::CoarseOnly);
  CHECK(frame.fine_calls == 0);
  CHECK(frame.record.predictions.count() == 2);
  CHECK(coarse.record.predictions.count() == 1);  // gap of 0.9 s is bridged with g = 2

  IsaParams no_refine = p;
  no_refine.refine = false;
  auto decomposed = run_isa(oracle, ctx_for(u), no_refine);
  CHECK(decomposed.record.predictions == coarse.record.predictions);
  CHECK(prediction_line(decomposed.record) == prediction_line(coarse.record));

  ConstantScorer c(0.7);
  auto whole = run_baseline(c, ctx_for(u), p, InferenceMode::UtteranceLevel);
  REQUIRE(whole.record.predictions.count() == 1);
  CHECK(whole.record.predictions.segments[0] == TimeSegment{0.0, 10.0});
  CHECK(whole.total_calls() == 1);
  ConstantScorer c2(0.5);
  CHECK(run_baseline(c2, ctx_for(u), p, InferenceMode::UtteranceLevel).record.predictions.empty());
  CHECK_THROWS_AS(run_baseline(c, ctx_for(u), p, InferenceMode::Isa), std::invalid_argument);
}

TEST_CASE("params validation") {
  IsaParams p;
  CHECK_NOTHROW(p.validate());
  p.coarse_stride = 0.6;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.fine_window = 0.6;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.merge_gap = -1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.coarse_threshold = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.coarse_window = 0.15;
  p.coarse_stride = 0.075;
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("serial and parallel pipelines agree") {
  ref::Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    auto u = ref::tamper_fixture(rng, "u");
    OracleScorer noisy(OracleConfig{0.0, 0.2, 5});
    auto a = run_isa(noisy, ctx_for(u), IsaParams{}, Execution::Serial);
    auto b = run_isa(noisy, ctx_for(u), IsaParams{}, Execution::Parallel);
    REQUIRE(a.record.predictions == b.record.predictions);
    REQUIRE(a.coarse.scores == b.coarse.scores);
  }
}
