#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "malr/common.hpp"

namespace malr {

// Final ordering produced for one query.
struct RankedList {
  std::string query_id;
  std::vector<std::string> ids;  // unique, best first
};

// On a miss, the paper convention scores MRR as 1/(K+1); the conventional
// IR definition scores it as 0.
enum class MrrMissMode { rank_k_plus_one, zero };

inline void require_gold(const GoldSet& gold) {
  if (gold.empty()) throw Error(ErrorCode::empty_gold, "metric requested with empty gold set");
}

inline double recall_at_k(const std::vector<std::string>& ranked, const GoldSet& gold,
                          size_t k) {
  require_gold(gold);
  size_t limit = std::min(k, ranked.size());
  size_t hits = 0;
  for (size_t i = 0; i < limit; ++i) {
    if (gold.count(ranked[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

inline double mrr_at_k(const std::vector<std::string>& ranked, const GoldSet& gold, size_t k,
                       MrrMissMode miss_mode = MrrMissMode::rank_k_plus_one) {
  require_gold(gold);
  size_t limit = std::min(k, ranked.size());
  for (size_t i = 0; i < limit; ++i) {
    if (gold.count(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  }
  if (miss_mode == MrrMissMode::rank_k_plus_one) return 1.0 / static_cast<double>(k + 1);
  return 0.0;
}

inline double ndcg_at_k(const std::vector<std::string>& ranked, const GoldSet& gold,
                        size_t k) {
  require_gold(gold);
  size_t limit = std::min(k, ranked.size());
  double dcg = 0.0;
  for (size_t i = 0; i < limit; ++i) {
    if (gold.count(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  // Ideal list places min(|gold|, k) relevant items at the top; gains are
  // binary throughout.
  size_t ideal = std::min(gold.size(), k);
  double idcg = 0.0;
  for (size_t i = 0; i < ideal; ++i) {
    idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  if (idcg == 0.0) return 0.0;
  return dcg / idcg;
}

inline double hitrate_at_k(const std::vector<std::string>& ranked, const GoldSet& gold,
                           size_t k) {
  require_gold(gold);
  size_t limit = std::min(k, ranked.size());
  for (size_t i = 0; i < limit; ++i) {
    if (gold.count(ranked[i])) return 1.0;
  }
  return 0.0;
}

struct PerQueryMetrics {
  std::string query_id;
  double recall = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  double hitrate = 0.0;
};

struct MetricReport {
  size_t k = 10;
  MrrMissMode miss_mode = MrrMissMode::rank_k_plus_one;
  double recall = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  double hitrate = 0.0;
  std::vector<PerQueryMetrics> per_query;
  size_t evaluated = 0;  // queries with non-empty gold
  size_t skipped = 0;    // unlabeled queries excluded from the aggregates
};

// Aggregates are arithmetic means over queries with non-empty gold; ranked
// lists are matched to gold sets by query id. Queries without a ranked list
// are scored against an empty list (all-miss).
inline MetricReport evaluate_rankings(
    const std::vector<RankedList>& rankings,
    const std::vector<std::pair<std::string, GoldSet>>& gold_by_query, size_t k,
    MrrMissMode miss_mode = MrrMissMode::rank_k_plus_one) {
  std::unordered_map<std::string, const RankedList*> by_id;
  for (const auto& r : rankings) by_id[r.query_id] = &r;

  MetricReport report;
  report.k = k;
  report.miss_mode = miss_mode;
  static const std::vector<std::string> kEmpty;
  for (const auto& [qid, gold] : gold_by_query) {
    if (gold.empty()) {
      ++report.skipped;
      continue;
    }
    auto it = by_id.find(qid);
    const std::vector<std::string>& ids = (it != by_id.end()) ? it->second->ids : kEmpty;
    PerQueryMetrics pq;
    pq.query_id = qid;
    pq.recall = recall_at_k(ids, gold, k);
    pq.mrr = mrr_at_k(ids, gold, k, miss_mode);
    pq.ndcg = ndcg_at_k(ids, gold, k);
    pq.hitrate = hitrate_at_k(ids, gold, k);
    report.recall += pq.recall;
    report.mrr += pq.mrr;
    report.ndcg += pq.ndcg;
    report.hitrate += pq.hitrate;
    report.per_query.push_back(std::move(pq));
    ++report.evaluated;
  }
  if (report.evaluated > 0) {
    double n = static_cast<double>(report.evaluated);
    report.recall /= n;
    report.mrr /= n;
    report.ndcg /= n;
    report.hitrate /= n;
  }
  return report;
}

// Recall values observed across repeated runs of the same queries.
struct RolloutMatrix {
  std::vector<std::string> query_ids;
  std::vector<std::vector<double>> recalls;  // one row per query, R columns
  size_t rollouts = 0;

  void validate() const {
    if (query_ids.size() != recalls.size()) {
      throw Error(ErrorCode::malformed_record, "rollout matrix rows do not match query ids");
    }
    for (const auto& row : recalls) {
      if (row.size() != rollouts) {
        throw Error(ErrorCode::incomplete_group,
                    "rollout matrix requires the same rollout count for every query");
      }
    }
  }
};

struct VariabilityReport {
  double avg_max = 0.0;
  double avg_mean = 0.0;
  double avg_min = 0.0;
};

inline VariabilityReport variability(const RolloutMatrix& matrix) {
  if (matrix.rollouts < 1) throw Error(ErrorCode::empty_input, "variability requires R >= 1");
  matrix.validate();
  if (matrix.recalls.empty()) throw Error(ErrorCode::empty_input, "variability requires queries");
  VariabilityReport out;
  for (const auto& row : matrix.recalls) {
    double mx = row[0], mn = row[0], sum = 0.0;
    for (double v : row) {
      mx = std::max(mx, v);
      mn = std::min(mn, v);
      sum += v;
    }
    out.avg_max += mx;
    out.avg_mean += sum / static_cast<double>(row.size());
    out.avg_min += mn;
  }
  double n = static_cast<double>(matrix.recalls.size());
  out.avg_max /= n;
  out.avg_mean /= n;
  out.avg_min /= n;
  return out;
}

// Four-way behavioural partition of per-query recall distributions:
//   1: stable and always correct        (min == full)
//   2: occasionally correct, unstable   (max == full, min < full)
//   3: never fully correct, unstable    (max < full, max > min)
//   4: consistently incorrect           (max == min < full)
// "Correct" means recall >= full_threshold; "stable" means the spread is
// within stable_tol.
struct CategoryConfig {
  double full_threshold = 1.0;
  double stable_tol = 0.0;
};

struct CategoryReport {
  std::array<size_t, 4> counts{0, 0, 0, 0};
  size_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

inline CategoryReport categorize(const RolloutMatrix& matrix, CategoryConfig cfg = {}) {
  if (matrix.rollouts < 2) throw Error(ErrorCode::empty_input, "categorize requires R >= 2");
  matrix.validate();
  CategoryReport report;
  for (const auto& row : matrix.recalls) {
    double mx = row[0], mn = row[0];
    for (double v : row) {
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    bool max_full = mx >= cfg.full_threshold;
    bool min_full = mn >= cfg.full_threshold;
    bool stable = (mx - mn) <= cfg.stable_tol;
    if (min_full) {
      report.counts[0]++;
    } else if (max_full) {
      report.counts[1]++;
    } else if (!stable) {
      report.counts[2]++;
    } else {
      report.counts[3]++;
    }
  }
  return report;
}

}  // namespace malr
