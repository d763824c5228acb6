#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "malr/common.hpp"
#include "malr/metrics.hpp"
#include "malr/orchestrator.hpp"

namespace malr {

struct RewardConfig {
  double step_penalty = -0.05;    // applied to every planner round, exit included
  double alpha = 0.1;             // shaping coefficient on newly covered gold
  double fallback_penalty = -5.0; // invalid early exit
  double epsilon = 1e-8;          // normalization stabilizer
  size_t group_size = 8;          // K rollouts per query
  size_t groups_per_batch = 2;    // G groups per update
  bool hit_reward_fraction = false;   // ΔCov as a fraction of |gold| instead of a count
  bool penalize_skipped = true;       // skip rounds still consume a planner iteration

  void validate() const {
    if (epsilon <= 0.0) throw Error(ErrorCode::config, "epsilon must be > 0");
    if (group_size < 2) throw Error(ErrorCode::config, "group_size must be >= 2");
    if (alpha < 0.0) throw Error(ErrorCode::config, "alpha must be >= 0");
  }
};

struct RewardBreakdown {
  double r_final = 0.0;
  std::vector<double> r_hits;   // one entry per planner round
  std::vector<double> r_steps;  // one entry per planner round
  double fallback = 0.0;
  double total = 0.0;

  double hits_sum() const {
    double s = 0.0;
    for (double x : r_hits) s += x;
    return s;
  }
  double steps_sum() const {
    double s = 0.0;
    for (double x : r_steps) s += x;
    return s;
  }
};

// Terminal reward: recall of the merged pool against the gold set, evaluated
// at the pool's own size.
inline double final_reward(const CandidatePool& pool, const GoldSet& gold) {
  require_gold(gold);
  if (pool.empty()) return 0.0;
  return recall_at_k(pool.ids(), gold, pool.size());
}

inline void require_training_trajectory(const Trajectory& trajectory) {
  if (trajectory.mode != MasMode::training) {
    throw Error(ErrorCode::missing_training_annotations,
                "trajectory was not recorded in training mode");
  }
  for (const auto& rec : trajectory.records) {
    if (!rec.new_gold) {
      throw Error(ErrorCode::missing_training_annotations,
                  "iteration record lacks a new_gold annotation");
    }
  }
}

// Per-round shaping reward: alpha times the count of gold statutes that first
// entered the pool in that round (or the covered fraction, behind the flag).
inline std::vector<double> hit_rewards(const Trajectory& trajectory, const GoldSet& gold,
                                       const RewardConfig& config = {}) {
  require_gold(gold);
  require_training_trajectory(trajectory);
  std::vector<double> out;
  out.reserve(trajectory.records.size());
  double scale = config.hit_reward_fraction ? 1.0 / static_cast<double>(gold.size()) : 1.0;
  for (const auto& rec : trajectory.records) {
    out.push_back(config.alpha * scale * static_cast<double>(*rec.new_gold));
  }
  return out;
}

inline std::vector<double> step_penalties(const Trajectory& trajectory,
                                          const RewardConfig& config = {}) {
  std::vector<double> out;
  out.reserve(trajectory.records.size());
  for (const auto& rec : trajectory.records) {
    bool counted = !rec.skipped || config.penalize_skipped;
    out.push_back(counted ? config.step_penalty : 0.0);
  }
  return out;
}

inline RewardBreakdown total_reward(const Trajectory& trajectory, const GoldSet& gold,
                                    const RewardConfig& config = {}) {
  config.validate();
  require_gold(gold);
  require_training_trajectory(trajectory);
  RewardBreakdown breakdown;
  breakdown.r_steps = step_penalties(trajectory, config);
  if (trajectory.terminated_by == TerminatedBy::invalid_early_exit) {
    breakdown.r_final = 0.0;
    breakdown.fallback = config.fallback_penalty;
    breakdown.r_hits.assign(trajectory.records.size(), 0.0);
  } else {
    breakdown.r_final = final_reward(trajectory.pool, gold);
    breakdown.fallback = 0.0;
    breakdown.r_hits = hit_rewards(trajectory, gold, config);
  }
  breakdown.total =
      breakdown.r_final + breakdown.hits_sum() + breakdown.steps_sum() + breakdown.fallback;
  return breakdown;
}

struct TrajectoryGroup {
  std::vector<double> rewards;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::vector<double> advantages;
};

// Group-wise standardization: (R_i - mean) / (stddev + epsilon). A constant
// group yields all-zero advantages.
inline std::vector<double> normalize_group(const std::vector<double>& rewards, double epsilon) {
  if (rewards.size() < 2) {
    throw Error(ErrorCode::group_too_small, "normalization needs a group of at least 2");
  }
  if (epsilon <= 0.0) throw Error(ErrorCode::config, "epsilon must be > 0");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  double stddev = std::sqrt(var);
  std::vector<double> advantages;
  advantages.reserve(rewards.size());
  for (double r : rewards) advantages.push_back((r - mean) / (stddev + epsilon));
  return advantages;
}

inline TrajectoryGroup make_trajectory_group(std::vector<double> rewards,
                                             const RewardConfig& config = {}) {
  TrajectoryGroup group;
  group.advantages = normalize_group(rewards, config.epsilon);
  group.rewards = std::move(rewards);
  double mean = 0.0;
  for (double r : group.rewards) mean += r;
  group.mean = mean / static_cast<double>(group.rewards.size());
  double var = 0.0;
  for (double r : group.rewards) var += (r - group.mean) * (r - group.mean);
  group.stddev = std::sqrt(var / static_cast<double>(group.rewards.size()));
  return group;
}

// L = -(1/K) * sum_i advantage_i * log pi(tau_i). The log-probabilities are
// whole-trajectory sums; multiple reformulations inside one round contribute
// multiple action terms to that sum upstream.
inline double grpo_loss(const std::vector<double>& advantages,
                        const std::vector<double>& log_probs) {
  if (advantages.size() != log_probs.size() || advantages.empty()) {
    throw Error(ErrorCode::config, "advantages and log_probs must have equal non-zero length");
  }
  double s = 0.0;
  for (size_t i = 0; i < advantages.size(); ++i) s += advantages[i] * log_probs[i];
  return -s / static_cast<double>(advantages.size());
}

struct TrajectoryReward {
  std::string query_id;
  std::string trajectory_id;
  RewardBreakdown breakdown;
  std::optional<double> advantage;
};

// Offline reward oracle over recorded training-mode trajectories. When
// normalization is requested, each query must contribute exactly
// config.group_size trajectories.
inline std::vector<TrajectoryReward> reward_trajectories(
    const std::vector<Trajectory>& trajectories,
    const std::unordered_map<std::string, GoldSet>& gold_by_query, const RewardConfig& config,
    bool normalize) {
  config.validate();
  std::vector<TrajectoryReward> out;
  out.reserve(trajectories.size());
  std::map<std::string, std::vector<size_t>> groups;  // query_id -> indices, file order
  for (size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& t = trajectories[i];
    auto it = gold_by_query.find(t.query_id);
    if (it == gold_by_query.end()) {
      throw Error(ErrorCode::malformed_record, "no gold set for query " + t.query_id);
    }
    TrajectoryReward r;
    r.query_id = t.query_id;
    r.trajectory_id = t.trajectory_id;
    r.breakdown = total_reward(t, it->second, config);
    groups[t.query_id].push_back(out.size());
    out.push_back(std::move(r));
  }
  if (normalize) {
    for (const auto& [qid, indices] : groups) {
      if (indices.size() != config.group_size) {
        throw Error(ErrorCode::incomplete_group,
                    "query " + qid + " has " + std::to_string(indices.size()) +
                        " trajectories, normalization needs exactly " +
                        std::to_string(config.group_size));
      }
      std::vector<double> rewards;
      rewards.reserve(indices.size());
      for (size_t i : indices) rewards.push_back(out[i].breakdown.total);
      std::vector<double> adv = normalize_group(rewards, config.epsilon);
      for (size_t j = 0; j < indices.size(); ++j) out[indices[j]].advantage = adv[j];
    }
  }
  return out;
}

}  // namespace malr
