#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "isa/annotations.hpp"
#include "isa/audio.hpp"

namespace isa {

// Whether a batch of independent work items may be spread over OpenMP
// threads. Serial is the reference path used by tests and benchmarks.
enum class Execution { Serial, Parallel };

// Everything a scorer may consult about the utterance being analysed.
// `audio` is set only for scorers that report needs_audio(), and
// `ground_truth` only for scorers that report needs_ground_truth().
struct ScoringContext {
  std::string utt_id;
  std::string audio_path;
  double duration = 0.0;
  const SegmentSet* ground_truth = nullptr;
  const AudioBuffer* audio = nullptr;
};

struct ScoreRequest {
  std::string utt_id;
  std::string audio_path;
  double start = 0.0;
  double end = 0.0;
};

struct WindowScore {
  ScoreRequest request;
  double score = 0.0;
};

// Black-box window classifier: maps [start, end] of an utterance to a fake
// confidence in [0, 1]. In-process implementations are pure.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::string describe() const = 0;
  virtual bool needs_audio() const { return false; }
  virtual bool needs_ground_truth() const { return false; }

  virtual double score(const ScoringContext& ctx, const TimeSegment& window) const = 0;

  // Default fans out over score(); OpenMP is used for Execution::Parallel.
  virtual std::vector<double> score_batch(const ScoringContext& ctx,
                                          std::span<const TimeSegment> windows,
                                          Execution exec) const;
};

/// Scores every window in order and validates the results.
/// Throws ProtocolError if a scorer returns NaN or a value outside [0, 1].
std::vector<WindowScore> score_windows(const Scorer& scorer, const ScoringContext& ctx,
                                       std::span<const TimeSegment> windows,
                                       Execution exec = Execution::Parallel);

class ConstantScorer final : public Scorer {
 public:
  explicit ConstantScorer(double value);
  std::string describe() const override;
  double score(const ScoringContext&, const TimeSegment&) const override { return value_; }

 private:
  double value_;
};

// Test oracle that reads the ground truth. min_overlap == 0 means "any
// strictly positive overlap" (more than kAnyOverlapEpsilon seconds).
struct OracleConfig {
  double min_overlap = 0.0;
  double noise_sigma = 0.0;
  std::optional<std::uint64_t> seed;
};

inline constexpr double kAnyOverlapEpsilon = 1e-9;

/// Ideal window score: 1 when the best overlap with a tampered segment meets
/// min_overlap, else 0, plus seeded Gaussian noise, clipped to [0, 1].
/// The noise for a window depends only on (seed, utt_id, window), never on
/// call order. Throws std::invalid_argument if noise_sigma > 0 without a seed.
double oracle_score(const SegmentSet& ground_truth, const TimeSegment& window,
                    const OracleConfig& cfg, std::string_view utt_id = {});

class OracleScorer final : public Scorer {
 public:
  explicit OracleScorer(OracleConfig cfg);
  std::string describe() const override;
  bool needs_ground_truth() const override { return true; }
  double score(const ScoringContext& ctx, const TimeSegment& window) const override;

 private:
  OracleConfig cfg_;
};

// Logistic over window level in dBFS: 1 / (1 + exp(-(dB - center) / slope)).
inline constexpr double kEnergyCenterDb = -30.0;
inline constexpr double kEnergySlopeDb = 3.0;
inline constexpr double kEnergyFloorDb = -120.0;

double energy_score(const AudioBuffer& window);

class EnergyScorer final : public Scorer {
 public:
  std::string describe() const override { return "energy"; }
  bool needs_audio() const override { return true; }
  double score(const ScoringContext& ctx, const TimeSegment& window) const override;
};

// Score file: lines {"utt_id","start","end","score"}.
class ScoreTable {
 public:
  static constexpr double kKeyTolerance = 1e-4;

  static ScoreTable parse(std::istream& in);
  static ScoreTable load(const std::string& path);

  void insert(const std::string& utt_id, double start, double end, double score);
  /// Throws MissingScoreError when no row matches within kKeyTolerance.
  double lookup(std::string_view utt_id, double start, double end) const;
  std::size_t size() const { return size_; }

 private:
  struct Row {
    double start, end, score;
  };
  std::unordered_map<std::string, std::vector<Row>> rows_;
  std::size_t size_ = 0;
};

double precomputed_lookup(const ScoreTable& table, const ScoreRequest& request);

void write_score_file(std::ostream& out, std::span<const WindowScore> scores);

class PrecomputedScorer final : public Scorer {
 public:
  PrecomputedScorer(ScoreTable table, std::string source);
  std::string describe() const override { return "precomputed:" + source_; }
  double score(const ScoringContext& ctx, const TimeSegment& window) const override;

 private:
  ScoreTable table_;
  std::string source_;
};

/// Bridges to a subprocess speaking line-delimited JSON over stdio:
///   request  {"id":int,"audio_path":str,"start":float,"end":float}
///   response {"id":int,"score":float}   (any order)
/// A response {"id":int,"error":str} fails that batch with ScorerError.
/// Each concurrent caller borrows its own process from a pool.
class ExternalScorer final : public Scorer {
 public:
  explicit ExternalScorer(std::string command,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~ExternalScorer() override;
  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  std::string describe() const override { return "external:" + command_; }
  double score(const ScoringContext& ctx, const TimeSegment& window) const override;
  std::vector<double> score_batch(const ScoringContext& ctx, std::span<const TimeSegment> windows,
                                  Execution exec) const override;

  struct Pool;

 private:
  std::string command_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<Pool> pool_;
};

/// Builds a scorer from a CLI spec:
///   oracle[:sigma[:min_overlap]] | energy | constant:V | precomputed:FILE | external:CMD
std::unique_ptr<Scorer> make_scorer(const std::string& spec,
                                    std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace isa
