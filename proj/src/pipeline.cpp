#include "isa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace isa {

namespace {

// Absorbs float64 noise in (D - W) / S before flooring.
constexpr double kGridSlack = 1e-9;

std::size_t window_count(double span, double window, double stride) {
  return static_cast<std::size_t>(std::floor((span - window) / stride + kGridSlack)) + 1;
}

ConfidenceMap score_grid(const Scorer& scorer, const ScoringContext& ctx,
                         std::vector<TimeSegment> windows, Execution exec) {
  ConfidenceMap map;
  auto scored = score_windows(scorer, ctx, windows, exec);
  map.windows = std::move(windows);
  map.scores.reserve(scored.size());
  for (const auto& s : scored) map.scores.push_back(s.score);
  return map;
}

std::vector<TimeSegment> merge_touching(std::vector<TimeSegment> segs) {
  std::sort(segs.begin(), segs.end(),
            [](const TimeSegment& a, const TimeSegment& b) { return a.start < b.start; });
  std::vector<TimeSegment> out;
  for (const auto& s : segs) {
    if (!out.empty() && s.start <= out.back().end + kGridSlack)
      out.back().end = std::max(out.back().end, s.end);
    else
      out.push_back(s);
  }
  return out;
}

PipelineResult coarse_stage(const Scorer& scorer, const ScoringContext& ctx,
                            const IsaParams& params, Execution exec) {
  PipelineResult result;
  result.record.utt_id = ctx.utt_id;
  result.record.predictions.duration = ctx.duration;
  result.coarse = coarse_scan(scorer, ctx, params, exec);
  result.coarse_calls = result.coarse.size();
  auto flagged = flag_windows(result.coarse.scores, params.coarse_threshold);
  result.candidates = merge_flagged(flagged, params.merge_gap, result.coarse.windows);
  return result;
}

}  // namespace

void IsaParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  };
  positive(coarse_window, "coarse window");
  positive(coarse_stride, "coarse stride");
  positive(fine_window, "fine window");
  positive(fine_stride, "fine stride");
  unit(coarse_threshold, "coarse threshold");
  unit(fine_threshold, "fine threshold");
  if (merge_gap < 0) throw std::invalid_argument("merge gap must be >= 0");
  if (!(extension >= 0.0)) throw std::invalid_argument("extension must be >= 0");
  if (coarse_stride > coarse_window) throw std::invalid_argument("coarse stride exceeds coarse window");
  if (fine_stride > fine_window) throw std::invalid_argument("fine stride exceeds fine window");
  // Non-strict so the window-size sweep can run W = W' = 0.15 s.
  if (fine_window > coarse_window) throw std::invalid_argument("fine window exceeds coarse window");
  if (fine_stride > coarse_stride) throw std::invalid_argument("fine stride exceeds coarse stride");
}

std::vector<TimeSegment> coarse_grid(double duration, double window, double stride,
                                     bool cover_tail) {
  if (duration < window) return {{0.0, duration}};
  const std::size_t count = window_count(duration, window, stride);
  std::vector<TimeSegment> grid;
  grid.reserve(count + 1);
  for (std::size_t k = 0; k < count; ++k) {
    double t = static_cast<double>(k) * stride;
    grid.push_back({t, t + window});
  }
  if (cover_tail && grid.back().end < duration - kGridSlack)
    grid.push_back({duration - window, duration});
  return grid;
}

std::vector<TimeSegment> fine_grid(const TimeSegment& interval, double window, double stride) {
  const double span = interval.duration();
  if (span < window) return {interval};
  const std::size_t count = window_count(span, window, stride);
  std::vector<TimeSegment> grid;
  grid.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    double t = interval.start + static_cast<double>(k) * stride;
    grid.push_back({t, std::min(t + window, interval.end)});
  }
  return grid;
}

ConfidenceMap coarse_scan(const Scorer& scorer, const ScoringContext& ctx,
                          const IsaParams& params, Execution exec) {
  return score_grid(scorer, ctx,
                    coarse_grid(ctx.duration, params.coarse_window, params.coarse_stride,
                                params.cover_tail),
                    exec);
}

std::vector<std::size_t> flag_windows(std::span<const double> scores, double threshold) {
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= threshold) flagged.push_back(i + 1);
  return flagged;
}

std::vector<CandidateRegion> merge_flagged(std::span<const std::size_t> flagged, int gap,
                                           std::span<const TimeSegment> grid) {
  std::vector<CandidateRegion> regions;
  const auto reach = static_cast<std::size_t>(gap) + 1;
  for (std::size_t k : flagged) {
    if (k == 0 || k > grid.size()) throw std::out_of_range("flagged index outside the grid");
    if (regions.empty() || k - regions.back().cluster.back() > reach) {
      regions.push_back({grid[k - 1], {k}});
    } else {
      regions.back().cluster.push_back(k);
      regions.back().bounds.end = std::max(regions.back().bounds.end, grid[k - 1].end);
    }
  }
  return regions;
}

RefineOutcome refine_region(const Scorer& scorer, const ScoringContext& ctx,
                            const CandidateRegion& region, const IsaParams& params,
                            Execution exec) {
  RefineOutcome out;
  out.extended = {std::max(0.0, region.bounds.start - params.extension),
                  std::min(ctx.duration, region.bounds.end + params.extension)};
  out.fine = score_grid(scorer, ctx, fine_grid(out.extended, params.fine_window, params.fine_stride),
                        exec);
  auto flagged = flag_windows(out.fine.scores, params.fine_threshold);
  if (flagged.empty()) return out;
  const TimeSegment& first = out.fine.windows[flagged.front() - 1];
  const TimeSegment& last = out.fine.windows[flagged.back() - 1];
  out.segment = TimeSegment{first.start, std::min(last.end, out.extended.end)};
  return out;
}

std::vector<WindowScore> PipelineResult::trace(const ScoringContext& ctx) const {
  std::vector<WindowScore> out;
  auto append = [&](const ConfidenceMap& map) {
    for (std::size_t i = 0; i < map.size(); ++i)
      out.push_back({{ctx.utt_id, ctx.audio_path, map.windows[i].start, map.windows[i].end},
                     map.scores[i]});
  };
  append(coarse);
  for (const auto& r : refinements) append(r.fine);
  return out;
}

PipelineResult run_isa(const Scorer& scorer, const ScoringContext& ctx, const IsaParams& params,
                       Execution exec) {
  params.validate();
  PipelineResult result = coarse_stage(scorer, ctx, params, exec);
  if (!params.refine) {
    result.record.mode = params.merge_gap == 0 ? InferenceMode::FrameLevel : InferenceMode::CoarseOnly;
    for (const auto& c : result.candidates) result.record.predictions.segments.push_back(c.bounds);
    return result;
  }
  result.record.mode = InferenceMode::Isa;
  std::vector<TimeSegment> refined;
  for (const auto& candidate : result.candidates) {
    result.refinements.push_back(refine_region(scorer, ctx, candidate, params, exec));
    const auto& r = result.refinements.back();
    result.fine_calls += r.fine.size();
    if (r.segment) refined.push_back(*r.segment);
  }
  result.record.predictions.segments = merge_touching(std::move(refined));
  return result;
}

PipelineResult run_baseline(const Scorer& scorer, const ScoringContext& ctx,
                            const IsaParams& params, InferenceMode mode, Execution exec) {
  IsaParams p = params;
  p.refine = false;
  switch (mode) {
    case InferenceMode::FrameLevel:
      p.merge_gap = 0;
      return run_isa(scorer, ctx, p, exec);
    case InferenceMode::CoarseOnly: {
      // Label stays coarse_only even when the caller's gap happens to be 0.
      PipelineResult r = run_isa(scorer, ctx, p, exec);
      r.record.mode = InferenceMode::CoarseOnly;
      return r;
    }
    case InferenceMode::UtteranceLevel: {
      p.validate();
      PipelineResult r;
      r.record.utt_id = ctx.utt_id;
      r.record.mode = InferenceMode::UtteranceLevel;
      r.record.predictions.duration = ctx.duration;
      r.coarse = score_grid(scorer, ctx, {{0.0, ctx.duration}}, exec);
      r.coarse_calls = 1;
      if (r.coarse.scores.front() >= params.coarse_threshold)
        r.record.predictions.segments.push_back({0.0, ctx.duration});
      return r;
    }
    case InferenceMode::Isa:
      break;
  }
  throw std::invalid_argument("run_baseline does not handle mode isa");
}

PipelineResult run_mode(const Scorer& scorer, const ScoringContext& ctx, const IsaParams& params,
                        InferenceMode mode, Execution exec) {
  if (mode == InferenceMode::Isa) return run_isa(scorer, ctx, params, exec);
  return run_baseline(scorer, ctx, params, mode, exec);
}

}  // namespace isa
