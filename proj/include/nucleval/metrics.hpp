#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nucleval/labelmap.hpp"

namespace nucleval {

// Matching rule: a ground-truth/prediction pair is a true positive iff their
// mask IoU exceeds 0.5. Above that threshold the matching is provably
// unique, so enumeration needs no assignment solver.
inline constexpr double kMatchIouThreshold = 0.5;

struct TruePositive {
  std::int32_t gt_id = 0;
  std::int32_t pred_id = 0;
  double iou = 0.0;

  friend bool operator==(const TruePositive&, const TruePositive&) = default;
};

struct MatchResult {
  std::vector<TruePositive> true_positives;   // sorted by gt_id
  std::vector<std::int32_t> false_positives;  // unmatched pred ids, ascending
  std::vector<std::int32_t> false_negatives;  // unmatched gt ids, ascending
};

// Pooled counts for one evaluation scope.
struct MatchCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double iou_sum = 0.0;

  MatchCounts& operator+=(const MatchCounts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    iou_sum += other.iou_sum;
    return *this;
  }
};

struct ClassMetrics {
  double dq = 0.0;
  double sq = 0.0;
  double pq = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double iou_sum = 0.0;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct MetricsReport {
  ClassMetrics binary;                   // class-agnostic, all nuclei pooled
  std::map<int, ClassMetrics> per_class; // one entry per class 1..C
  double multi_pq = 0.0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

namespace detail {

struct InstanceSummary {
  std::int32_t id = 0;
  std::int32_t class_id = 0;
  long area = 0;
};

struct OverlapTable {
  std::vector<InstanceSummary> gt;    // ascending id
  std::vector<InstanceSummary> pred;  // ascending id
  // (gt index, pred index) -> shared pixel count, only nonzero overlaps
  std::unordered_map<std::uint64_t, long> intersections;
};

// Single pass over both maps collecting per-instance areas, classes, and the
// joint overlap histogram.
inline OverlapTable build_overlap_table(const LabelPatch& gt, const LabelPatch& pred) {
  if (gt.height() != pred.height() || gt.width() != pred.width()) {
    throw std::invalid_argument("match_instances: gt is " + std::to_string(gt.height()) + "x" +
                                std::to_string(gt.width()) + " but pred is " +
                                std::to_string(pred.height()) + "x" +
                                std::to_string(pred.width()));
  }
  OverlapTable table;
  std::unordered_map<std::int32_t, std::size_t> gt_slot;
  std::unordered_map<std::int32_t, std::size_t> pred_slot;
  auto slot_for = [](std::unordered_map<std::int32_t, std::size_t>& slots,
                     std::vector<InstanceSummary>& list, std::int32_t id,
                     std::int32_t cls) -> std::size_t {
    auto [it, inserted] = slots.emplace(id, list.size());
    if (inserted) list.push_back(InstanceSummary{id, cls, 0});
    return it->second;
  };
  for (int r = 0; r < gt.height(); ++r) {
    for (int c = 0; c < gt.width(); ++c) {
      const std::int32_t g = gt.instance_map(r, c);
      const std::int32_t p = pred.instance_map(r, c);
      std::size_t gi = 0;
      std::size_t pi = 0;
      if (g != 0) {
        gi = slot_for(gt_slot, table.gt, g, gt.class_map(r, c));
        ++table.gt[gi].area;
      }
      if (p != 0) {
        pi = slot_for(pred_slot, table.pred, p, pred.class_map(r, c));
        ++table.pred[pi].area;
      }
      if (g != 0 && p != 0) {
        const std::uint64_t key = (static_cast<std::uint64_t>(gi) << 32) | pi;
        ++table.intersections[key];
      }
    }
  }
  auto by_id = [](const InstanceSummary& a, const InstanceSummary& b) { return a.id < b.id; };
  // Re-key intersections onto id-sorted indices.
  std::vector<std::size_t> gt_rank(table.gt.size());
  std::vector<std::size_t> pred_rank(table.pred.size());
  {
    std::vector<std::size_t> order(table.gt.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return by_id(table.gt[a], table.gt[b]); });
    std::vector<InstanceSummary> sorted(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted[i] = table.gt[order[i]];
      gt_rank[order[i]] = i;
    }
    table.gt = std::move(sorted);
  }
  {
    std::vector<std::size_t> order(table.pred.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return by_id(table.pred[a], table.pred[b]); });
    std::vector<InstanceSummary> sorted(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted[i] = table.pred[order[i]];
      pred_rank[order[i]] = i;
    }
    table.pred = std::move(sorted);
  }
  std::unordered_map<std::uint64_t, long> rekeyed;
  rekeyed.reserve(table.intersections.size());
  for (const auto& [key, count] : table.intersections) {
    const std::size_t gi = gt_rank[key >> 32];
    const std::size_t pi = pred_rank[key & 0xffffffffu];
    rekeyed.emplace((static_cast<std::uint64_t>(gi) << 32) | pi, count);
  }
  table.intersections = std::move(rekeyed);
  return table;
}

// IoU > 0.5 in exact integer arithmetic: inter / (a + p - inter) > 1/2
// is equivalent to 3 * inter > a + p.
inline bool above_match_threshold(long inter, long gt_area, long pred_area) {
  return 3 * inter > gt_area + pred_area;
}

struct PairMatch {
  std::size_t gt_index;
  std::size_t pred_index;
  double iou;
};

// Enumerates all pairs above the matching threshold and verifies that the
// resulting matching is one-to-one.
inline std::vector<PairMatch> enumerate_matches(const OverlapTable& table, bool class_aware) {
  std::vector<PairMatch> matches;
  for (const auto& [key, inter] : table.intersections) {
    const std::size_t gi = key >> 32;
    const std::size_t pi = key & 0xffffffffu;
    const InstanceSummary& g = table.gt[gi];
    const InstanceSummary& p = table.pred[pi];
    if (class_aware && g.class_id != p.class_id) continue;
    if (!above_match_threshold(inter, g.area, p.area)) continue;
    const double iou =
        static_cast<double>(inter) / static_cast<double>(g.area + p.area - inter);
    matches.push_back(PairMatch{gi, pi, iou});
  }
  std::sort(matches.begin(), matches.end(),
            [](const PairMatch& a, const PairMatch& b) { return a.gt_index < b.gt_index; });
  std::unordered_set<std::size_t> seen_gt;
  std::unordered_set<std::size_t> seen_pred;
  for (const PairMatch& m : matches) {
    if (!seen_gt.insert(m.gt_index).second || !seen_pred.insert(m.pred_index).second) {
      throw std::logic_error("match_instances: matching above IoU 0.5 is not one-to-one");
    }
  }
  return matches;
}

}  // namespace detail

// Matches ground-truth and predicted instances at mask IoU > 0.5. When
// class_aware, only instances of equal class may match; cross-class overlap
// then yields one false positive and one false negative.
inline MatchResult match_instances(const LabelPatch& gt, const LabelPatch& pred,
                                   bool class_aware) {
  const detail::OverlapTable table = detail::build_overlap_table(gt, pred);
  const std::vector<detail::PairMatch> matches = detail::enumerate_matches(table, class_aware);
  MatchResult out;
  std::vector<bool> gt_matched(table.gt.size(), false);
  std::vector<bool> pred_matched(table.pred.size(), false);
  for (const detail::PairMatch& m : matches) {
    out.true_positives.push_back(
        TruePositive{table.gt[m.gt_index].id, table.pred[m.pred_index].id, m.iou});
    gt_matched[m.gt_index] = true;
    pred_matched[m.pred_index] = true;
  }
  for (std::size_t i = 0; i < table.pred.size(); ++i) {
    if (!pred_matched[i]) out.false_positives.push_back(table.pred[i].id);
  }
  for (std::size_t i = 0; i < table.gt.size(); ++i) {
    if (!gt_matched[i]) out.false_negatives.push_back(table.gt[i].id);
  }
  return out;
}

inline MatchCounts counts_of(const MatchResult& m) {
  MatchCounts counts;
  counts.tp = static_cast<long>(m.true_positives.size());
  counts.fp = static_cast<long>(m.false_positives.size());
  counts.fn = static_cast<long>(m.false_negatives.size());
  for (const TruePositive& tp : m.true_positives) counts.iou_sum += tp.iou;
  return counts;
}

// DQ = tp / (tp + fp/2 + fn/2), SQ = mean matched IoU, PQ = DQ * SQ.
// Empty scopes yield all zeros.
inline ClassMetrics metrics_from_counts(const MatchCounts& counts) {
  ClassMetrics m;
  m.tp = counts.tp;
  m.fp = counts.fp;
  m.fn = counts.fn;
  m.iou_sum = counts.iou_sum;
  const double denom = static_cast<double>(counts.tp) + 0.5 * static_cast<double>(counts.fp) +
                       0.5 * static_cast<double>(counts.fn);
  if (denom > 0.0) m.dq = static_cast<double>(counts.tp) / denom;
  if (counts.tp > 0) m.sq = counts.iou_sum / static_cast<double>(counts.tp);
  m.pq = m.dq * m.sq;
  return m;
}

inline ClassMetrics compute_pq(const MatchResult& m) { return metrics_from_counts(counts_of(m)); }

// Per-patch pooled counts for the class-agnostic scope and every class.
struct PatchEvaluation {
  MatchCounts binary;
  std::vector<MatchCounts> per_class;  // index 0 unused; 1..C
};

// Evaluates one gt/pred pair. The class-aware matches are the equal-class
// subset of the class-agnostic ones (one-to-one matching makes the subset
// relation exact), so a single overlap pass serves both scopes.
inline PatchEvaluation evaluate_patch(const LabelPatch& gt, const LabelPatch& pred,
                                      int class_count = kDefaultClassCount) {
  if (class_count < 1) throw std::invalid_argument("evaluate_patch: class_count must be >= 1");
  const detail::OverlapTable table = detail::build_overlap_table(gt, pred);
  const std::vector<detail::PairMatch> matches = detail::enumerate_matches(table, false);

  PatchEvaluation eval;
  eval.per_class.resize(static_cast<std::size_t>(class_count) + 1);
  auto class_slot = [&](std::int32_t cls, const char* side) -> MatchCounts& {
    if (cls < 1 || cls > class_count) {
      throw std::invalid_argument(std::string("evaluate_patch: ") + side + " class " +
                                  std::to_string(cls) + " out of range [1, " +
                                  std::to_string(class_count) + "]");
    }
    return eval.per_class[static_cast<std::size_t>(cls)];
  };

  std::vector<bool> gt_matched(table.gt.size(), false);
  std::vector<bool> pred_matched(table.pred.size(), false);
  for (const detail::PairMatch& m : matches) {
    eval.binary.tp += 1;
    eval.binary.iou_sum += m.iou;
    gt_matched[m.gt_index] = true;
    pred_matched[m.pred_index] = true;
  }
  for (std::size_t i = 0; i < table.gt.size(); ++i) {
    if (!gt_matched[i]) eval.binary.fn += 1;
  }
  for (std::size_t i = 0; i < table.pred.size(); ++i) {
    if (!pred_matched[i]) eval.binary.fp += 1;
  }

  // Class-aware scope: keep equal-class matches, everything else splits into
  // a per-class FP and FN.
  std::vector<bool> gt_class_matched(table.gt.size(), false);
  std::vector<bool> pred_class_matched(table.pred.size(), false);
  for (const detail::PairMatch& m : matches) {
    const detail::InstanceSummary& g = table.gt[m.gt_index];
    const detail::InstanceSummary& p = table.pred[m.pred_index];
    if (g.class_id != p.class_id) continue;
    MatchCounts& counts = class_slot(g.class_id, "gt");
    counts.tp += 1;
    counts.iou_sum += m.iou;
    gt_class_matched[m.gt_index] = true;
    pred_class_matched[m.pred_index] = true;
  }
  for (std::size_t i = 0; i < table.gt.size(); ++i) {
    if (!gt_class_matched[i]) class_slot(table.gt[i].class_id, "gt").fn += 1;
  }
  for (std::size_t i = 0; i < table.pred.size(); ++i) {
    if (!pred_class_matched[i]) class_slot(table.pred[i].class_id, "pred").fp += 1;
  }
  return eval;
}

// Folds per-patch counts into the final report. multi_pq averages per-class
// PQ over classes with any support (tp + fp + fn > 0); classes absent from
// both sides are excluded.
inline MetricsReport report_from_evaluations(const std::vector<PatchEvaluation>& evals,
                                             int class_count = kDefaultClassCount) {
  if (evals.empty()) {
    throw std::invalid_argument("report_from_evaluations: empty evaluation list");
  }
  MatchCounts binary;
  std::vector<MatchCounts> per_class(static_cast<std::size_t>(class_count) + 1);
  for (const PatchEvaluation& eval : evals) {
    binary += eval.binary;
    for (std::size_t k = 1; k < per_class.size() && k < eval.per_class.size(); ++k) {
      per_class[k] += eval.per_class[k];
    }
  }
  MetricsReport report;
  report.binary = metrics_from_counts(binary);
  double pq_total = 0.0;
  int supported = 0;
  for (int k = 1; k <= class_count; ++k) {
    const MatchCounts& counts = per_class[static_cast<std::size_t>(k)];
    report.per_class[k] = metrics_from_counts(counts);
    if (counts.tp + counts.fp + counts.fn > 0) {
      pq_total += report.per_class[k].pq;
      ++supported;
    }
  }
  report.multi_pq = supported > 0 ? pq_total / supported : 0.0;
  return report;
}

// Pools matches over the whole dataset, class-agnostic for the binary scope
// and class-aware per class, then derives the report.
inline MetricsReport evaluate_dataset(const std::vector<std::pair<LabelPatch, LabelPatch>>& pairs,
                                      int class_count = kDefaultClassCount) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_dataset: empty pair list");
  std::vector<PatchEvaluation> evals;
  evals.reserve(pairs.size());
  for (const auto& [gt, pred] : pairs) {
    evals.push_back(evaluate_patch(gt, pred, class_count));
  }
  return report_from_evaluations(evals, class_count);
}

// Exhaustive maximum-cardinality, then maximum-total-IoU matching over all
// pairs above the threshold. Test oracle for match_instances; bounded to 12
// instances total.
inline MatchResult brute_force_match(const LabelPatch& gt, const LabelPatch& pred,
                                     bool class_aware) {
  if (gt.height() != pred.height() || gt.width() != pred.width()) {
    throw std::invalid_argument("brute_force_match: dimension mismatch");
  }
  const std::vector<InstanceRecord> gt_records = extract_instances(gt);
  const std::vector<InstanceRecord> pred_records = extract_instances(pred);
  if (gt_records.size() + pred_records.size() > 12) {
    throw std::invalid_argument("brute_force_match: more than 12 instances total");
  }

  const std::size_t n_gt = gt_records.size();
  const std::size_t n_pred = pred_records.size();
  std::vector<std::vector<double>> iou(n_gt, std::vector<double>(n_pred, 0.0));
  for (std::size_t i = 0; i < n_gt; ++i) {
    for (std::size_t j = 0; j < n_pred; ++j) {
      if (class_aware && gt_records[i].class_id != pred_records[j].class_id) continue;
      iou[i][j] = mask_iou(gt_records[i].pixels, pred_records[j].pixels);
    }
  }

  std::vector<int> assignment(n_gt, -1);
  std::vector<int> best_assignment(n_gt, -1);
  std::size_t best_card = 0;
  double best_iou_sum = -1.0;
  std::vector<bool> pred_used(n_pred, false);

  auto search = [&](auto&& self, std::size_t i, std::size_t card, double iou_sum) -> void {
    if (i == n_gt) {
      if (card > best_card || (card == best_card && iou_sum > best_iou_sum)) {
        best_card = card;
        best_iou_sum = iou_sum;
        best_assignment = assignment;
      }
      return;
    }
    for (std::size_t j = 0; j < n_pred; ++j) {
      if (pred_used[j] || iou[i][j] <= kMatchIouThreshold) continue;
      pred_used[j] = true;
      assignment[i] = static_cast<int>(j);
      self(self, i + 1, card + 1, iou_sum + iou[i][j]);
      assignment[i] = -1;
      pred_used[j] = false;
    }
    self(self, i + 1, card, iou_sum);
  };
  search(search, 0, 0, 0.0);

  MatchResult out;
  std::vector<bool> pred_matched(n_pred, false);
  for (std::size_t i = 0; i < n_gt; ++i) {
    const int j = best_assignment[i];
    if (j < 0) {
      out.false_negatives.push_back(gt_records[i].id);
      continue;
    }
    out.true_positives.push_back(
        TruePositive{gt_records[i].id, pred_records[static_cast<std::size_t>(j)].id,
                     iou[i][static_cast<std::size_t>(j)]});
    pred_matched[static_cast<std::size_t>(j)] = true;
  }
  for (std::size_t j = 0; j < n_pred; ++j) {
    if (!pred_matched[j]) out.false_positives.push_back(pred_records[j].id);
  }
  return out;
}

}  // namespace nucleval
