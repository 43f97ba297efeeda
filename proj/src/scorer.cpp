#include "isa/scorer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>

#include "isa/errors.hpp"
#include "json.hpp"

namespace isa {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string window_text(std::string_view utt_id, double start, double end) {
  std::ostringstream os;
  os << "(" << utt_id << ", " << start << ", " << end << ")";
  return os.str();
}

}  // namespace

std::vector<double> Scorer::score_batch(const ScoringContext& ctx,
                                        std::span<const TimeSegment> windows,
                                        Execution exec) const {
  std::vector<double> out(windows.size());
  if (exec == Execution::Serial) {
    for (std::size_t i = 0; i < windows.size(); ++i) out[i] = score(ctx, windows[i]);
    return out;
  }
  std::exception_ptr failure;
  std::once_flag once;
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = score(ctx, windows[i]);
    } catch (...) {
      std::call_once(once, [&] { failure = std::current_exception(); });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<WindowScore> score_windows(const Scorer& scorer, const ScoringContext& ctx,
                                       std::span<const TimeSegment> windows, Execution exec) {
  std::vector<double> raw = scorer.score_batch(ctx, windows, exec);
  if (raw.size() != windows.size())
    throw ProtocolError(scorer.describe() + " returned " + std::to_string(raw.size()) +
                        " scores for " + std::to_string(windows.size()) + " windows");
  std::vector<WindowScore> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!(raw[i] >= 0.0 && raw[i] <= 1.0))
      throw ProtocolError(scorer.describe() + " produced score " + std::to_string(raw[i]) +
                          " for " + window_text(ctx.utt_id, windows[i].start, windows[i].end));
    out.push_back({{ctx.utt_id, ctx.audio_path, windows[i].start, windows[i].end}, raw[i]});
  }
  return out;
}

// --- constant -------------------------------------------------------------

ConstantScorer::ConstantScorer(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) throw std::invalid_argument("constant score outside [0, 1]");
}

std::string ConstantScorer::describe() const {
  std::ostringstream os;
  os << "constant:" << value_;
  return os.str();
}

// --- oracle ---------------------------------------------------------------

double oracle_score(const SegmentSet& ground_truth, const TimeSegment& window,
                    const OracleConfig& cfg, std::string_view utt_id) {
  const double width = window.duration();
  double best = 0.0;
  for (const auto& seg : ground_truth.segments) {
    double inter = std::min(window.end, seg.end) - std::max(window.start, seg.start);
    best = std::max(best, inter);
  }
  bool hit;
  if (cfg.min_overlap <= 0.0) {
    hit = best > kAnyOverlapEpsilon;
  } else {
    hit = width > 0.0 && best / width >= cfg.min_overlap - 1e-12;
  }
  double value = hit ? 1.0 : 0.0;
  if (cfg.noise_sigma > 0.0) {
    if (!cfg.seed) throw std::invalid_argument("oracle noise requires a seed");
    std::uint64_t key = splitmix(*cfg.seed);
    key = splitmix(key ^ std::hash<std::string_view>{}(utt_id));
    key = splitmix(key ^ std::bit_cast<std::uint64_t>(window.start));
    key = splitmix(key ^ std::bit_cast<std::uint64_t>(window.end));
    std::mt19937_64 rng(key);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    value += noise(rng);
  }
  return std::clamp(value, 0.0, 1.0);
}

OracleScorer::OracleScorer(OracleConfig cfg) : cfg_(cfg) {
  if (cfg_.min_overlap < 0.0 || cfg_.min_overlap > 1.0)
    throw std::invalid_argument("oracle min_overlap outside [0, 1]");
  if (cfg_.noise_sigma < 0.0) throw std::invalid_argument("oracle noise sigma is negative");
  if (cfg_.noise_sigma > 0.0 && !cfg_.seed)
    throw std::invalid_argument("oracle noise sigma > 0 requires a seed");
}

std::string OracleScorer::describe() const {
  std::ostringstream os;
  os << "oracle:" << cfg_.noise_sigma << ":" << cfg_.min_overlap;
  if (cfg_.seed) os << " seed=" << *cfg_.seed;
  return os.str();
}

double OracleScorer::score(const ScoringContext& ctx, const TimeSegment& window) const {
  if (ctx.ground_truth == nullptr)
    throw ScorerUnavailableError("oracle scorer needs ground truth for " + ctx.utt_id);
  return oracle_score(*ctx.ground_truth, window, cfg_, ctx.utt_id);
}

// --- energy ---------------------------------------------------------------

double energy_score(const AudioBuffer& window) {
  double level = rms(window);
  double db = level > 0.0 ? 20.0 * std::log10(level) : kEnergyFloorDb;
  db = std::max(db, kEnergyFloorDb);
  return 1.0 / (1.0 + std::exp(-(db - kEnergyCenterDb) / kEnergySlopeDb));
}

double EnergyScorer::score(const ScoringContext& ctx, const TimeSegment& window) const {
  if (ctx.audio == nullptr)
    throw ScorerUnavailableError("energy scorer needs audio for " + ctx.utt_id);
  return energy_score(extract_window(*ctx.audio, window.start, window.duration()));
}

// --- precomputed ----------------------------------------------------------

ScoreTable ScoreTable::parse(std::istream& in) {
  ScoreTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
      table.insert(obj.at("utt_id").get<std::string>(), obj.at("start").get<double>(),
                   obj.at("end").get<double>(), obj.at("score").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  for (auto& [utt, rows] : table.rows_)
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return a.start < b.start || (a.start == b.start && a.end < b.end);
    });
  return table;
}

ScoreTable ScoreTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score file " + path);
  return parse(in);
}

void ScoreTable::insert(const std::string& utt_id, double start, double end, double score) {
  if (!(score >= 0.0 && score <= 1.0))
    throw SchemaError("score " + std::to_string(score) + " outside [0, 1]");
  auto& rows = rows_[utt_id];
  Row row{start, end, score};
  auto pos = std::upper_bound(rows.begin(), rows.end(), row, [](const Row& a, const Row& b) {
    return a.start < b.start || (a.start == b.start && a.end < b.end);
  });
  rows.insert(pos, row);
  ++size_;
}

double ScoreTable::lookup(std::string_view utt_id, double start, double end) const {
  auto it = rows_.find(std::string(utt_id));
  if (it != rows_.end()) {
    const auto& rows = it->second;
    auto lo = std::lower_bound(rows.begin(), rows.end(), start - kKeyTolerance,
                               [](const Row& r, double v) { return r.start < v; });
    for (; lo != rows.end() && lo->start <= start + kKeyTolerance; ++lo)
      if (std::abs(lo->end - end) <= kKeyTolerance) return lo->score;
  }
  throw MissingScoreError("no precomputed score for " + window_text(utt_id, start, end));
}

double precomputed_lookup(const ScoreTable& table, const ScoreRequest& request) {
  return table.lookup(request.utt_id, request.start, request.end);
}

void write_score_file(std::ostream& out, std::span<const WindowScore> scores) {
  for (const auto& s : scores) {
    nlohmann::ordered_json obj;
    obj["utt_id"] = s.request.utt_id;
    obj["start"] = s.request.start;
    obj["end"] = s.request.end;
    obj["score"] = s.score;
    out << obj.dump() << '\n';
  }
}

PrecomputedScorer::PrecomputedScorer(ScoreTable table, std::string source)
    : table_(std::move(table)), source_(std::move(source)) {}

double PrecomputedScorer::score(const ScoringContext& ctx, const TimeSegment& window) const {
  return table_.lookup(ctx.utt_id, window.start, window.end);
}

// --- factory --------------------------------------------------------------

std::unique_ptr<Scorer> make_scorer(const std::string& spec, std::optional<std::uint64_t> seed) {
  auto colon = spec.find(':');
  std::string kind = spec.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto number = [&](const std::string& text, const char* what) {
    try {
      std::size_t used = 0;
      double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("bad ") + what + " in scorer spec \"" + spec + "\"");
    }
  };
  if (kind == "oracle") {
    OracleConfig cfg;
    cfg.seed = seed;
    if (!rest.empty()) {
      auto c2 = rest.find(':');
      cfg.noise_sigma = number(rest.substr(0, c2), "sigma");
      if (c2 != std::string::npos) cfg.min_overlap = number(rest.substr(c2 + 1), "min_overlap");
    }
    return std::make_unique<OracleScorer>(cfg);
  }
  if (kind == "energy") return std::make_unique<EnergyScorer>();
  if (kind == "constant") return std::make_unique<ConstantScorer>(number(rest, "value"));
  if (kind == "precomputed") {
    if (rest.empty()) throw std::invalid_argument("precomputed scorer needs a file");
    return std::make_unique<PrecomputedScorer>(ScoreTable::load(rest), rest);
  }
  if (kind == "external") {
    if (rest.empty()) throw std::invalid_argument("external scorer needs a command");
    return std::make_unique<ExternalScorer>(rest);
  }
  throw std::invalid_argument("unknown scorer \"" + spec + "\"");
}

}  // namespace isa
