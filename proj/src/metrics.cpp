#include "isa/metrics.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <unordered_map>

#include "isa/errors.hpp"

namespace isa {

namespace {

// Greedy core shared by SF1 matching (accept >= tau) and mIoU (accept > 0).
template <typename Accept>
std::vector<MatchPair> greedy(const IoUMatrix& a, Accept accept) {
  std::vector<char> row_used(a.rows(), 0), col_used(a.cols(), 0);
  std::vector<MatchPair> pairs;
  while (true) {
    bool found = false;
    MatchPair best{0, 0, -1.0};
    for (std::size_t m = 0; m < a.rows(); ++m) {
      if (row_used[m]) continue;
      for (std::size_t n = 0; n < a.cols(); ++n) {
        if (col_used[n]) continue;
        // Strict > keeps the first (lowest m, then lowest n) among ties.
        if (a.at(m, n) > best.iou) {
          best = {m, n, a.at(m, n)};
          found = true;
        }
      }
    }
    if (!found || !accept(best.iou)) break;
    row_used[best.pred] = col_used[best.gt] = 1;
    pairs.push_back(best);
  }
  return pairs;
}

struct UttResult {
  std::size_t n_gt = 0, n_pred = 0;
  double miou = 0.0;
  std::vector<UtteranceMetrics> per_tau;
};

class GroupAccumulator {
 public:
  explicit GroupAccumulator(std::size_t n_tau) : tau_(n_tau) {}

  void add(const UttResult& u, GenuinePolicy policy) {
    ++n_utt_;
    if (u.n_gt == u.n_pred) ++count_correct_;
    if (u.n_gt == 0) {
      ++n_genuine_;
      if (u.n_pred > 0) ++false_alarms_;
    } else {
      ++n_fake_;
      miou_sum_ += u.miou;
    }
    for (std::size_t t = 0; t < tau_.size(); ++t) {
      const auto& m = u.per_tau[t];
      auto& acc = tau_[t];
      acc.tp += m.tp;
      acc.fp += m.fp;
      acc.fn += m.fn;
      if (u.n_gt > 0) {
        ++acc.f1_terms;
        ++acc.sr_terms;
        acc.sf1 += m.sf1;
        acc.sp += m.sp;
        acc.sr += m.sr;
      } else if (policy == GenuinePolicy::CountFalseAlarms && u.n_pred > 0) {
        ++acc.f1_terms;  // contributes SF1 = SP = 0
      }
    }
  }

  GroupSummary summary(std::span<const double> taus) const {
    GroupSummary s;
    s.n_utt = n_utt_;
    s.n_fake = n_fake_;
    s.n_genuine = n_genuine_;
    s.ca = n_utt_ ? static_cast<double>(count_correct_) / static_cast<double>(n_utt_) : 0.0;
    if (n_fake_) s.miou = miou_sum_ / static_cast<double>(n_fake_);
    if (n_genuine_) s.false_alarm_rate = static_cast<double>(false_alarms_) / static_cast<double>(n_genuine_);
    for (std::size_t t = 0; t < tau_.size(); ++t) {
      const auto& acc = tau_[t];
      TauSummary ts;
      ts.tau = taus[t];
      ts.tp = acc.tp;
      ts.fp = acc.fp;
      ts.fn = acc.fn;
      if (acc.f1_terms) {
        ts.sf1 = acc.sf1 / static_cast<double>(acc.f1_terms);
        ts.sp = acc.sp / static_cast<double>(acc.f1_terms);
      }
      if (acc.sr_terms) ts.sr = acc.sr / static_cast<double>(acc.sr_terms);
      s.per_tau.push_back(ts);
    }
    return s;
  }

 private:
  struct TauAcc {
    std::size_t tp = 0, fp = 0, fn = 0, f1_terms = 0, sr_terms = 0;
    double sf1 = 0.0, sp = 0.0, sr = 0.0;
  };
  std::size_t n_utt_ = 0, n_fake_ = 0, n_genuine_ = 0, count_correct_ = 0, false_alarms_ = 0;
  double miou_sum_ = 0.0;
  std::vector<TauAcc> tau_;
};

}  // namespace

double temporal_iou(const TimeSegment& a, const TimeSegment& b) {
  double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  double uni = a.duration() + b.duration() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

IoUMatrix IoUMatrix::build(std::span<const TimeSegment> predictions,
                           std::span<const TimeSegment> ground_truth) {
  IoUMatrix a(predictions.size(), ground_truth.size());
  for (std::size_t m = 0; m < predictions.size(); ++m)
    for (std::size_t n = 0; n < ground_truth.size(); ++n)
      a.at(m, n) = temporal_iou(predictions[m], ground_truth[n]);
  return a;
}

MatchResult greedy_match(const IoUMatrix& iou, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw SchemaError("tau must lie in (0, 1]");
  return {greedy(iou, [tau](double v) { return v >= tau; }), tau};
}

UtteranceMetrics utterance_metrics(const SegmentSet& ground_truth, const SegmentSet& predictions,
                                   double tau) {
  UtteranceMetrics u;
  u.n_gt = ground_truth.count();
  u.n_pred = predictions.count();
  u.count_correct = u.n_gt == u.n_pred;
  u.excluded_from_sf1 = u.n_gt == 0;
  auto match = greedy_match(IoUMatrix::build(predictions.segments, ground_truth.segments), tau);
  u.tp = match.pairs.size();
  u.fp = u.n_pred - u.tp;
  u.fn = u.n_gt - u.tp;
  for (const auto& p : match.pairs) u.matched_ious.push_back(p.iou);
  if (u.tp > 0) {
    u.sp = static_cast<double>(u.tp) / static_cast<double>(u.n_pred);
    u.sr = static_cast<double>(u.tp) / static_cast<double>(u.n_gt);
    u.sf1 = 2.0 * u.sp * u.sr / (u.sp + u.sr);
  }
  return u;
}

double count_accuracy(std::span<const std::pair<std::size_t, std::size_t>> counts) {
  if (counts.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& [n, n_hat] : counts)
    if (n == n_hat) ++correct;
  return static_cast<double>(correct) / static_cast<double>(counts.size());
}

double mean_iou(const SegmentSet& ground_truth, const SegmentSet& predictions) {
  if (ground_truth.empty()) return 0.0;
  auto pairs = greedy(IoUMatrix::build(predictions.segments, ground_truth.segments),
                      [](double v) { return v > 0.0; });
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.iou;
  return sum / static_cast<double>(ground_truth.count());
}

MetricReport evaluate_dataset(std::span<const UtteranceRecord> manifest,
                              std::span<const PredictionRecord> predictions,
                              const EvalOptions& options) {
  for (double tau : options.taus)
    if (!(tau > 0.0 && tau <= 1.0)) throw SchemaError("tau " + std::to_string(tau) + " outside (0, 1]");

  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < manifest.size(); ++i)
    if (!index.emplace(manifest[i].utt_id, i).second)
      throw SchemaError("duplicate utt_id in manifest: " + manifest[i].utt_id);

  std::vector<const PredictionRecord*> matched(manifest.size(), nullptr);
  for (const auto& p : predictions) {
    auto it = index.find(p.utt_id);
    if (it == index.end()) throw UnknownUttError("prediction for unknown utterance " + p.utt_id);
    if (matched[it->second]) throw SchemaError("duplicate prediction for " + p.utt_id);
    matched[it->second] = &p;
  }

  MetricReport report;
  report.taus = options.taus;
  report.genuine_policy = options.genuine_policy;
  for (std::size_t i = 0; i < manifest.size(); ++i)
    if (!matched[i]) report.missing_predictions.push_back(manifest[i].utt_id);

  std::vector<UttResult> results(manifest.size());
  auto evaluate_one = [&](std::size_t i) {
    const SegmentSet empty{{}, manifest[i].ground_truth.duration};
    const SegmentSet& pred = matched[i] ? matched[i]->predictions : empty;
    const SegmentSet& gt = manifest[i].ground_truth;
    UttResult& r = results[i];
    r.n_gt = gt.count();
    r.n_pred = pred.count();
    r.miou = mean_iou(gt, pred);
    for (double tau : options.taus) r.per_tau.push_back(utterance_metrics(gt, pred, tau));
  };

  if (options.exec == Execution::Serial) {
    for (std::size_t i = 0; i < manifest.size(); ++i) evaluate_one(i);
  } else {
    std::exception_ptr failure;
    std::once_flag once;
    const auto n = static_cast<std::ptrdiff_t>(manifest.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        evaluate_one(static_cast<std::size_t>(i));
      } catch (...) {
        std::call_once(once, [&] { failure = std::current_exception(); });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  const std::size_t n_tau = options.taus.size();
  GroupAccumulator overall(n_tau);
  std::map<std::string, GroupAccumulator> by_lang, by_variant;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    overall.add(results[i], options.genuine_policy);
    by_lang.try_emplace(std::string(to_string(manifest[i].language)), n_tau)
        .first->second.add(results[i], options.genuine_policy);
    by_variant.try_emplace(std::string(to_string(manifest[i].variant)), n_tau)
        .first->second.add(results[i], options.genuine_policy);
  }
  report.overall = overall.summary(options.taus);
  for (const auto& [k, acc] : by_lang) report.per_language.emplace(k, acc.summary(options.taus));
  for (const auto& [k, acc] : by_variant) report.per_variant.emplace(k, acc.summary(options.taus));
  return report;
}

}  // namespace isa
