#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace isa {

// Closed time interval in seconds. Ground truth and predictions both use it;
// timestamps are never stored as sample indices outside the audio layer.
struct TimeSegment {
  double start = 0.0;
  double end = 0.0;

  double duration() const { return end - start; }
  friend bool operator==(const TimeSegment&, const TimeSegment&) = default;
};

// Segments of one utterance plus the utterance duration D.
// An empty set encodes a genuine utterance (N = 0).
struct SegmentSet {
  std::vector<TimeSegment> segments;
  double duration = 0.0;

  std::size_t count() const { return segments.size(); }
  bool empty() const { return segments.empty(); }
  friend bool operator==(const SegmentSet&, const SegmentSet&) = default;
};

enum class Language { EN, FR, DE, IT, ES, VI, Other };
enum class Variant { Real, Fake1w, Fake2w, Fake3w };
enum class InferenceMode { Isa, CoarseOnly, FrameLevel, UtteranceLevel };

std::string_view to_string(Language lang);
std::string_view to_string(Variant variant);
std::string_view to_string(InferenceMode mode);
Language parse_language(std::string_view text);
Variant parse_variant(std::string_view text);
InferenceMode parse_mode(std::string_view text);

// Number of tampered segments implied by a variant (real -> 0, fakeKw -> K).
std::size_t variant_count(Variant variant);
Variant variant_for_count(std::size_t count);

struct UtteranceRecord {
  std::string utt_id;
  std::string audio_path;
  double duration = 0.0;
  Language language = Language::Other;
  Variant variant = Variant::Real;
  SegmentSet ground_truth;
};

struct PredictionRecord {
  std::string utt_id;
  InferenceMode mode = InferenceMode::Isa;
  SegmentSet predictions;
};

/// Returns `set` sorted by start after checking every segment.
///
/// Throws DegenerateError for start >= end or non-finite bounds,
/// OutOfRangeError for segments outside [0, D], and OverlapError when
/// `require_disjoint` is set and two segments share a positive-length span.
SegmentSet validate_segment_set(SegmentSet set, bool require_disjoint);

/// Total tampered duration over utterance duration; 0 for an empty set.
double fake_ratio(const SegmentSet& ground_truth);

// Line-delimited JSON manifests and prediction files. Readers skip blank
// lines and report the 1-based line number of the first bad record.
std::vector<UtteranceRecord> parse_manifest(std::istream& in);
std::vector<UtteranceRecord> read_manifest(const std::string& path);
void write_manifest(std::ostream& out, const std::vector<UtteranceRecord>& records);
void write_manifest(const std::string& path, const std::vector<UtteranceRecord>& records);

std::vector<PredictionRecord> parse_predictions(std::istream& in);
std::vector<PredictionRecord> read_predictions(const std::string& path);
void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records);
void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records);

std::string manifest_line(const UtteranceRecord& record);
std::string prediction_line(const PredictionRecord& record);

}  // namespace isa
