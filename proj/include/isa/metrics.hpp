#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "isa/annotations.hpp"
#include "isa/scorer.hpp"

namespace isa {

// |a ∩ b| / |a ∪ b| on durations; 0 for disjoint or touching intervals.
double temporal_iou(const TimeSegment& a, const TimeSegment& b);

// Rows are predictions, columns ground-truth segments.
class IoUMatrix {
 public:
  IoUMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  static IoUMatrix build(std::span<const TimeSegment> predictions,
                         std::span<const TimeSegment> ground_truth);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double at(std::size_t m, std::size_t n) const { return data_[m * cols_ + n]; }
  double& at(std::size_t m, std::size_t n) { return data_[m * cols_ + n]; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

struct MatchPair {
  std::size_t pred;  // 0-based row
  std::size_t gt;    // 0-based column
  double iou;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // in matching order
  double tau = 0.5;
};

/// Greedy one-to-one matching: repeatedly takes the largest entry among
/// unmatched rows and columns while it is >= tau. Ties go to the lowest
/// prediction index, then the lowest ground-truth index.
MatchResult greedy_match(const IoUMatrix& iou, double tau);

struct UtteranceMetrics {
  std::size_t n_gt = 0;
  std::size_t n_pred = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double sp = 0.0, sr = 0.0, sf1 = 0.0;
  bool count_correct = false;
  // Genuine utterances (N = 0) never enter the SF1 macro average; they only
  // feed count accuracy and the false-alarm rate.
  bool excluded_from_sf1 = false;
  std::vector<double> matched_ious;
};

UtteranceMetrics utterance_metrics(const SegmentSet& ground_truth, const SegmentSet& predictions,
                                   double tau);

// Mean of 1[N_hat == N] over (N, N_hat) pairs; 0 for an empty list.
double count_accuracy(std::span<const std::pair<std::size_t, std::size_t>> counts);

/// Toolkit definition of mIoU for one fake utterance: greedy matching on every
/// positive IoU, then the mean over ground-truth segments of the matched IoU,
/// unmatched segments contributing 0. Returns 0 for N = 0.
double mean_iou(const SegmentSet& ground_truth, const SegmentSet& predictions);

// How genuine utterances with false alarms enter the SF1 average.
enum class GenuinePolicy {
  Exclude,            // strict: average over tampered utterances only
  CountFalseAlarms,   // genuine with N_hat > 0 adds an SF1 = 0 (and SP = 0) term
};

struct EvalOptions {
  std::vector<double> taus{0.3, 0.5};
  GenuinePolicy genuine_policy = GenuinePolicy::Exclude;
  Execution exec = Execution::Parallel;
};

struct TauSummary {
  double tau = 0.0;
  std::optional<double> sf1, sp, sr;  // empty when the group has no SF1 terms
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct GroupSummary {
  std::size_t n_utt = 0, n_fake = 0, n_genuine = 0;
  double ca = 0.0;
  std::optional<double> miou;
  std::optional<double> false_alarm_rate;
  std::vector<TauSummary> per_tau;
};

struct MetricReport {
  std::vector<double> taus;
  GenuinePolicy genuine_policy = GenuinePolicy::Exclude;
  GroupSummary overall;
  std::map<std::string, GroupSummary> per_language;
  std::map<std::string, GroupSummary> per_variant;
  std::vector<std::string> missing_predictions;  // utt_ids scored as N_hat = 0
};

/// Dataset-level aggregation. Predictions missing for a manifest entry count
/// as N_hat = 0 and are listed in missing_predictions. Throws UnknownUttError
/// for predictions whose utt_id is not in the manifest, SchemaError for
/// duplicates or tau outside (0, 1]. Per-utterance work may run in
/// parallel; aggregation runs in manifest order so results are bit-stable.
MetricReport evaluate_dataset(std::span<const UtteranceRecord> manifest,
                              std::span<const PredictionRecord> predictions,
                              const EvalOptions& options = {});

std::string report_to_json(const MetricReport& report);
std::string report_to_csv(const MetricReport& report);

// Key used for a threshold in reports, e.g. "0.3".
std::string tau_key(double tau);

}  // namespace isa
