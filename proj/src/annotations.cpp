#include "isa/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "isa/errors.hpp"
#include "json.hpp"

namespace isa {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kLanguageNames[] = {"EN", "FR", "DE", "IT", "ES", "VI", "other"};
constexpr std::string_view kVariantNames[] = {"real", "fake1w", "fake2w", "fake3w"};
constexpr std::string_view kModeNames[] = {"isa", "coarse_only", "frame_level", "utterance_level"};

// Boundary comparisons tolerate float64 noise from upstream arithmetic.
constexpr double kBoundsSlack = 1e-9;

std::string describe(const TimeSegment& seg) {
  std::ostringstream os;
  os << "(" << seg.start << ", " << seg.end << ")";
  return os.str();
}

ojson segments_to_json(const SegmentSet& set) {
  ojson arr = ojson::array();
  for (const auto& seg : set.segments) arr.push_back(ojson::array({seg.start, seg.end}));
  return arr;
}

std::vector<TimeSegment> segments_from_json(const ojson& arr) {
  if (!arr.is_array()) throw SchemaError("\"segments\" must be an array");
  std::vector<TimeSegment> out;
  out.reserve(arr.size());
  for (const auto& pair : arr) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
      throw SchemaError("each segment must be a [start, end] pair of numbers");
    out.push_back({pair[0].get<double>(), pair[1].get<double>()});
  }
  return out;
}

template <typename T>
T required(const ojson& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(std::string("missing field \"") + key + "\"");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string("field \"") + key + "\" has the wrong type");
  }
}

// Runs `parse_one` on every non-blank line, attaching line numbers to errors.
template <typename Record, typename Fn>
std::vector<Record> parse_lines(std::istream& in, Fn parse_one) {
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ojson obj;
    try {
      obj = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, e.what());
    }
    if (!obj.is_object()) throw ParseError(lineno, "expected a JSON object");
    try {
      out.push_back(parse_one(obj));
    } catch (const DataError& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace

std::string_view to_string(Language lang) { return kLanguageNames[static_cast<int>(lang)]; }
std::string_view to_string(Variant variant) { return kVariantNames[static_cast<int>(variant)]; }
std::string_view to_string(InferenceMode mode) { return kModeNames[static_cast<int>(mode)]; }

Language parse_language(std::string_view text) {
  for (int i = 0; i < 6; ++i)
    if (kLanguageNames[i] == text) return static_cast<Language>(i);
  // Anything outside the six corpus languages is bucketed as "other".
  return Language::Other;
}

Variant parse_variant(std::string_view text) {
  for (int i = 0; i < 4; ++i)
    if (kVariantNames[i] == text) return static_cast<Variant>(i);
  throw SchemaError("unknown variant \"" + std::string(text) + "\"");
}

InferenceMode parse_mode(std::string_view text) {
  for (int i = 0; i < 4; ++i)
    if (kModeNames[i] == text) return static_cast<InferenceMode>(i);
  throw SchemaError("unknown mode \"" + std::string(text) + "\"");
}

std::size_t variant_count(Variant variant) { return static_cast<std::size_t>(variant); }

Variant variant_for_count(std::size_t count) {
  if (count > 3) throw SchemaError("no variant for " + std::to_string(count) + " segments");
  return static_cast<Variant>(count);
}

SegmentSet validate_segment_set(SegmentSet set, bool require_disjoint) {
  if (!std::isfinite(set.duration) || set.duration <= 0.0)
    throw DegenerateError("utterance duration must be positive and finite");
  for (const auto& seg : set.segments) {
    if (!std::isfinite(seg.start) || !std::isfinite(seg.end) || seg.start >= seg.end)
      throw DegenerateError("degenerate segment " + describe(seg));
    if (seg.start < 0.0 || seg.end > set.duration + kBoundsSlack)
      throw OutOfRangeError("segment " + describe(seg) + " exceeds [0, " +
                            std::to_string(set.duration) + "]");
  }
  std::stable_sort(set.segments.begin(), set.segments.end(),
                   [](const TimeSegment& a, const TimeSegment& b) { return a.start < b.start; });
  if (require_disjoint) {
    for (std::size_t i = 1; i < set.segments.size(); ++i) {
      if (set.segments[i].start < set.segments[i - 1].end)
        throw OverlapError("segments " + describe(set.segments[i - 1]) + " and " +
                           describe(set.segments[i]) + " overlap");
    }
  }
  return set;
}

double fake_ratio(const SegmentSet& ground_truth) {
  if (ground_truth.duration <= 0.0) return 0.0;
  double total = 0.0;
  for (const auto& seg : ground_truth.segments) total += seg.duration();
  return total / ground_truth.duration;
}

// --- manifest -------------------------------------------------------------

std::string manifest_line(const UtteranceRecord& r) {
  ojson obj;
  obj["utt_id"] = r.utt_id;
  obj["audio_path"] = r.audio_path;
  obj["duration"] = r.duration;
  obj["language"] = std::string(to_string(r.language));
  obj["variant"] = std::string(to_string(r.variant));
  obj["segments"] = segments_to_json(r.ground_truth);
  return obj.dump();
}

std::vector<UtteranceRecord> parse_manifest(std::istream& in) {
  return parse_lines<UtteranceRecord>(in, [](const ojson& obj) {
    UtteranceRecord r;
    r.utt_id = required<std::string>(obj, "utt_id");
    r.audio_path = required<std::string>(obj, "audio_path");
    r.duration = required<double>(obj, "duration");
    r.language = parse_language(required<std::string>(obj, "language"));
    r.variant = parse_variant(required<std::string>(obj, "variant"));
    auto it = obj.find("segments");
    if (it == obj.end()) throw SchemaError("missing field \"segments\"");
    if (!(r.duration > 0.0)) throw SchemaError("duration must be positive");
    r.ground_truth = validate_segment_set({segments_from_json(*it), r.duration}, true);
    if (variant_count(r.variant) != r.ground_truth.count())
      throw SchemaError("variant " + std::string(to_string(r.variant)) + " does not match " +
                        std::to_string(r.ground_truth.count()) + " segments");
    return r;
  });
}

std::vector<UtteranceRecord> read_manifest(const std::string& path) {
  auto in = open_in(path);
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, const std::vector<UtteranceRecord>& records) {
  for (const auto& r : records) out << manifest_line(r) << '\n';
}

void write_manifest(const std::string& path, const std::vector<UtteranceRecord>& records) {
  auto out = open_out(path);
  write_manifest(out, records);
}

// --- predictions ----------------------------------------------------------

std::string prediction_line(const PredictionRecord& r) {
  ojson obj;
  obj["utt_id"] = r.utt_id;
  obj["mode"] = std::string(to_string(r.mode));
  obj["segments"] = segments_to_json(r.predictions);
  return obj.dump();
}

std::vector<PredictionRecord> parse_predictions(std::istream& in) {
  return parse_lines<PredictionRecord>(in, [](const ojson& obj) {
    PredictionRecord r;
    r.utt_id = required<std::string>(obj, "utt_id");
    r.mode = parse_mode(required<std::string>(obj, "mode"));
    auto it = obj.find("segments");
    if (it == obj.end()) throw SchemaError("missing field \"segments\"");
    r.predictions.segments = segments_from_json(*it);
    for (const auto& seg : r.predictions.segments)
      if (!(seg.start < seg.end) || seg.start < 0.0)
        throw DegenerateError("degenerate prediction " + describe(seg));
    std::stable_sort(r.predictions.segments.begin(), r.predictions.segments.end(),
                     [](const TimeSegment& a, const TimeSegment& b) { return a.start < b.start; });
    return r;
  });
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  auto in = open_in(path);
  return parse_predictions(in);
}

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records) {
  for (const auto& r : records) out << prediction_line(r) << '\n';
}

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
  auto out = open_out(path);
  write_predictions(out, records);
}

}  // namespace isa
