#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "isa/annotations.hpp"
#include "isa/scorer.hpp"

namespace isa {

// Hyperparameters of the coarse-to-fine search. Defaults are the tuned
// values: 0.5 s / 0.25 s coarse windows flagged at 0.6, gap tolerance of
// two windows, 0.3 s extension, 0.15 s / 0.05 s fine windows flagged at 0.7.
struct IsaParams {
  double coarse_window = 0.5;
  double coarse_stride = 0.25;
  double coarse_threshold = 0.6;
  int merge_gap = 2;
  double extension = 0.3;
  double fine_window = 0.15;
  double fine_stride = 0.05;
  double fine_threshold = 0.7;
  // Appends a right-aligned window when the regular grid stops short of D.
  bool cover_tail = true;
  // Stage 3 switch; off reproduces the coarse-only baseline.
  bool refine = true;

  /// Throws std::invalid_argument on non-positive sizes, thresholds outside
  /// [0, 1], a negative gap, stride > window, or a fine stage coarser than
  /// the coarse one.
  void validate() const;
};

// Window grid plus one score per window. Window indices used by the
// flagging and merging functions are 1-based: window k is windows[k - 1].
struct ConfidenceMap {
  std::vector<TimeSegment> windows;
  std::vector<double> scores;

  std::size_t size() const { return windows.size(); }
};

struct CandidateRegion {
  TimeSegment bounds;
  std::vector<std::size_t> cluster;  // 1-based flagged window indices, ascending
};

struct RefineOutcome {
  TimeSegment extended;               // analysis interval after the +/- extension
  ConfidenceMap fine;                 // fine-grid scores inside `extended`
  std::optional<TimeSegment> segment; // empty when the candidate was discarded
};

/// Regular grid of floor((D - W) / S) + 1 windows [(k-1)S, (k-1)S + W].
/// With cover_tail, a final [D - W, D] window is appended when the last
/// regular window ends before D. If D < W the grid is the single window [0, D].
std::vector<TimeSegment> coarse_grid(double duration, double window, double stride,
                                     bool cover_tail);

// Fine grid anchored at interval.start, same counting rule, no tail window.
std::vector<TimeSegment> fine_grid(const TimeSegment& interval, double window, double stride);

ConfidenceMap coarse_scan(const Scorer& scorer, const ScoringContext& ctx,
                          const IsaParams& params, Execution exec = Execution::Parallel);

// 1-based indices k with scores[k - 1] >= threshold, ascending.
std::vector<std::size_t> flag_windows(std::span<const double> scores, double threshold);

/// Groups flagged indices whose successive differences are <= gap + 1 and
/// maps each cluster to (start of first window, end of last window).
std::vector<CandidateRegion> merge_flagged(std::span<const std::size_t> flagged, int gap,
                                           std::span<const TimeSegment> grid);

RefineOutcome refine_region(const Scorer& scorer, const ScoringContext& ctx,
                            const CandidateRegion& region, const IsaParams& params,
                            Execution exec = Execution::Parallel);

struct PipelineResult {
  PredictionRecord record;
  ConfidenceMap coarse;
  std::vector<CandidateRegion> candidates;
  std::vector<RefineOutcome> refinements;
  std::size_t coarse_calls = 0;
  std::size_t fine_calls = 0;

  std::size_t total_calls() const { return coarse_calls + fine_calls; }
  // Every scored window in call order: coarse grid, then each fine grid.
  std::vector<WindowScore> trace(const ScoringContext& ctx) const;
};

/// Full coarse scan -> region proposal -> boundary refinement.
/// Overlapping or touching refined segments are merged in a final pass.
/// With params.refine == false the Stage-2 regions are returned verbatim and
/// the record is labelled coarse_only (frame_level when merge_gap == 0).
PipelineResult run_isa(const Scorer& scorer, const ScoringContext& ctx, const IsaParams& params,
                       Execution exec = Execution::Parallel);

/// frame_level: merge_gap 0, no refinement. coarse_only: no refinement.
/// utterance_level: one score over [0, D]; predicts [0, D] when >= threshold.
PipelineResult run_baseline(const Scorer& scorer, const ScoringContext& ctx,
                            const IsaParams& params, InferenceMode mode,
                            Execution exec = Execution::Parallel);

PipelineResult run_mode(const Scorer& scorer, const ScoringContext& ctx, const IsaParams& params,
                        InferenceMode mode, Execution exec = Execution::Parallel);

}  // namespace isa
