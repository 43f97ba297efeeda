#include <sstream>

#include "doctest.h"
#include "isa/annotations.hpp"
#include "isa/errors.hpp"
#include "support/reference.hpp"
#include "support/tempdir.hpp"

using namespace isa;

TEST_CASE("validate_segment_set accepts and sorts") {
  auto s = validate_segment_set({{{4.8, 5.6}, {1.5, 2.2}}, 8.0}, true);
  CHECK(s.count() == 2);
  CHECK(s.segments[0].start == 1.5);
  CHECK(s.segments[1].start == 4.8);
  CHECK(validate_segment_set({{}, 8.0}, true).count() == 0);
}

TEST_CASE("validate_segment_set rejects bad sets") {
  CHECK_THROWS_AS(validate_segment_set({{{2.0, 1.0}}, 8.0}, true), DegenerateError);
  CHECK_THROWS_AS(validate_segment_set({{{1.0, 1.0}}, 8.0}, true), DegenerateError);
  CHECK_THROWS_AS(validate_segment_set({{{7.0, 8.5}}, 8.0}, true), OutOfRangeError);
  CHECK_THROWS_AS(validate_segment_set({{{-0.1, 0.5}}, 8.0}, true), OutOfRangeError);
  CHECK_THROWS_AS(validate_segment_set({{{1.0, 2.0}, {1.5, 3.0}}, 8.0}, true), OverlapError);
  // predictions may overlap
  CHECK(validate_segment_set({{{1.0, 2.0}, {1.5, 3.0}}, 8.0}, false).count() == 2);
  // touching ground truth is not an overlap
  CHECK(validate_segment_set({{{1.0, 2.0}, {2.0, 3.0}}, 8.0}, true).count() == 2);
}

TEST_CASE("fake_ratio") {
  CHECK(fake_ratio({{{1.5, 2.2}, {4.8, 5.6}}, 8.0}) == doctest::Approx(0.1875).epsilon(1e-12));
  CHECK(fake_ratio({{}, 8.0}) == 0.0);
  CHECK(fake_ratio({{{0.0, 8.0}}, 8.0}) == 1.0);
}

TEST_CASE("fake_ratio ignores segment order") {
  ref::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    auto u = ref::tamper_fixture(rng, "u");
    SegmentSet rev = u.ground_truth;
    std::reverse(rev.segments.begin(), rev.segments.end());
    CHECK(fake_ratio(rev) == doctest::Approx(fake_ratio(u.ground_truth)).epsilon(1e-12));
  }
}

TEST_CASE("enum spellings") {
  CHECK(to_string(Variant::Fake2w) == "fake2w");
  CHECK(parse_variant("real") == Variant::Real);
  CHECK(parse_language("EN") == Language::EN);
  CHECK(parse_language("klingon") == Language::Other);
  CHECK(parse_mode("coarse_only") == InferenceMode::CoarseOnly);
  CHECK_THROWS_AS(parse_mode("bogus"), SchemaError);
  CHECK(variant_count(Variant::Fake3w) == 3);
  CHECK(variant_for_count(0) == Variant::Real);
}

TEST_CASE("manifest parsing") {
  std::istringstream one(
      R"({"utt_id":"u1","audio_path":"a.wav","duration":8,"language":"EN","variant":"fake2w","segments":[[4.8,5.6],[1.5,2.2]]})"
      "\n");
  auto recs = parse_manifest(one);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].ground_truth.count() == 2);
  CHECK(recs[0].ground_truth.segments[0].start == 1.5);
  CHECK(recs[0].ground_truth.duration == 8.0);

  std::istringstream empty("");
  CHECK(parse_manifest(empty).empty());

  std::istringstream bad(
      R"({"utt_id":"u1","audio_path":"a.wav","duration":8,"language":"EN","variant":"real","segments":[]})"
      "\n"
      R"({"utt_id":"u2","audio_path":"a.wav","duration":8,"language":"EN","variant":"real","segments":[]})"
      "\n{not json\n");
  try {
    parse_manifest(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("manifest schema errors") {
  std::istringstream mismatch(
      R"({"utt_id":"u","audio_path":"a","duration":8,"language":"EN","variant":"fake1w","segments":[]})");
  CHECK_THROWS_AS(parse_manifest(mismatch), SchemaError);
  std::istringstream missing(R"({"utt_id":"u","duration":8,"language":"EN","variant":"real","segments":[]})");
  CHECK_THROWS_AS(parse_manifest(missing), SchemaError);
  std::istringstream overlap(
      R"({"utt_id":"u","audio_path":"a","duration":8,"language":"EN","variant":"fake2w","segments":[[1,3],[2,4]]})");
  CHECK_THROWS_AS(parse_manifest(overlap), DataError);
}

TEST_CASE("manifest and predictions round-trip") {
  ref::Rng rng(5);
  std::vector<UtteranceRecord> recs;
  std::vector<PredictionRecord> preds;
  for (int i = 0; i < 100; ++i) {
    auto u = ref::tamper_fixture(rng, "utt" + std::to_string(i));
    u.language = static_cast<Language>(rng.integer(0, 6));
    recs.push_back(u);
    PredictionRecord p;
    p.utt_id = u.utt_id;
    p.mode = static_cast<InferenceMode>(rng.integer(0, 3));
    p.predictions.duration = u.duration;
    for (int k = rng.integer(0, 4); k > 0; --k) p.predictions.segments.push_back(ref::random_segment(rng, u.duration));
    std::sort(p.predictions.segments.begin(), p.predictions.segments.end(),
              [](auto& a, auto& b) { return a.start < b.start; });
    preds.push_back(p);
  }
  TempDir dir;
  write_manifest(dir.file("m.jsonl"), recs);
  write_predictions(dir.file("p.jsonl"), preds);
  auto recs2 = read_manifest(dir.file("m.jsonl"));
  auto preds2 = read_predictions(dir.file("p.jsonl"));
  REQUIRE(recs2.size() == recs.size());
  REQUIRE(preds2.size() == preds.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs2[i].utt_id == recs[i].utt_id);
    CHECK(recs2[i].language == recs[i].language);
    CHECK(recs2[i].variant == recs[i].variant);
    CHECK(std::abs(recs2[i].duration - recs[i].duration) <= 1e-9);
    REQUIRE(recs2[i].ground_truth.count() == recs[i].ground_truth.count());
    for (std::size_t k = 0; k < recs[i].ground_truth.count(); ++k) {
      CHECK(std::abs(recs2[i].ground_truth.segments[k].start - recs[i].ground_truth.segments[k].start) <= 1e-9);
      CHECK(std::abs(recs2[i].ground_truth.segments[k].end - recs[i].ground_truth.segments[k].end) <= 1e-9);
    }
    CHECK(preds2[i].mode == preds[i].mode);
    CHECK(preds2[i].predictions.segments == preds[i].predictions.segments);
  }
  // canonical form is a fixed point
  write_manifest(dir.file("m2.jsonl"), recs2);
  CHECK(slurp(dir.file("m.jsonl")) == slurp(dir.file("m2.jsonl")));
}

TEST_CASE("prediction lines") {
  PredictionRecord p{"u1", InferenceMode::Isa, {{{1.0, 2.0}}, 5.0}};
  CHECK(prediction_line(p) == R"({"utt_id":"u1","mode":"isa","segments":[[1.0,2.0]]})");
  std::istringstream bad(R"({"utt_id":"u","mode":"isa","segments":[[2,1]]})");
  CHECK_THROWS_AS(parse_predictions(bad), DataError);
  CHECK_THROWS_AS(read_manifest("/nonexistent/manifest.jsonl"), IoError);
}
