#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "malr/agents.hpp"
#include "malr/common.hpp"
#include "malr/grpo.hpp"
#include "malr/orchestrator.hpp"

namespace malr {

// Tabular softmax policy over the planner's six actions, conditioned on a
// small discrete observation (query archetype, round index, coverage bucket).
class ToyPolicy {
 public:
  static constexpr size_t kNumActions = 6;

  explicit ToyPolicy(size_t n_states) : n_states_(n_states), logits_(n_states * kNumActions, 0.0) {
    if (n_states < 1) throw Error(ErrorCode::config, "policy needs at least one state");
  }

  size_t n_states() const { return n_states_; }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& logits() { return logits_; }

  std::array<double, kNumActions> probs(size_t state) const {
    check_state(state);
    const double* l = logits_.data() + state * kNumActions;
    double mx = l[0];
    for (size_t a = 1; a < kNumActions; ++a) mx = std::max(mx, l[a]);
    std::array<double, kNumActions> p{};
    double z = 0.0;
    for (size_t a = 0; a < kNumActions; ++a) {
      p[a] = std::exp(l[a] - mx);
      z += p[a];
    }
    for (auto& x : p) x /= z;
    return p;
  }

  double log_prob(size_t state, size_t action) const {
    auto p = probs(state);
    return std::log(p[action]);
  }

  size_t sample(size_t state, std::mt19937_64& rng) const {
    auto p = probs(state);
    double u = uniform_unit(rng);
    double acc = 0.0;
    for (size_t a = 0; a < kNumActions; ++a) {
      acc += p[a];
      if (u < acc) return a;
    }
    return kNumActions - 1;
  }

 private:
  void check_state(size_t state) const {
    if (state >= n_states_) throw Error(ErrorCode::config, "state out of range");
  }

  size_t n_states_;
  std::vector<double> logits_;
};

// One simulated query family. `action_hits[a]` lists the gold indices a
// rewrite action retrieves; `noise` independently drops each retrieved index
// with that probability.
struct SimArchetype {
  std::string name;
  size_t gold_size = 1;
  std::array<std::vector<int>, 5> action_hits;  // indexed by rewrite PlannerAction
  double noise = 0.0;
};

struct SimRollout {
  size_t archetype = 0;
  std::vector<std::pair<size_t, size_t>> state_actions;  // policy decisions only
  Trajectory trajectory;
};

struct SimGroup {
  size_t archetype = 0;
  std::vector<SimRollout> rollouts;
  std::vector<double> rewards;
};

// Stand-in retrieval environment: episodes follow the planner-loop shape
// (up to four rewrite rounds, then a required exit), coverage of the hidden
// gold set is monotone, and rewards come from the shared trajectory-reward
// path so the estimator is exercised end to end.
class SimEnv {
 public:
  static constexpr int kMaxRounds = 5;       // 4 rewrite rounds + required exit
  static constexpr size_t kBuckets = 5;      // coverage-so-far buckets

  explicit SimEnv(std::vector<SimArchetype> archetypes) : archetypes_(std::move(archetypes)) {
    if (archetypes_.empty()) throw Error(ErrorCode::config, "environment needs archetypes");
    for (const auto& a : archetypes_) {
      if (a.gold_size < 1) throw Error(ErrorCode::config, "archetype gold_size must be >= 1");
      for (const auto& hits : a.action_hits) {
        for (int idx : hits) {
          if (idx < 0 || static_cast<size_t>(idx) >= a.gold_size) {
            throw Error(ErrorCode::config, "action hit index out of gold range");
          }
        }
      }
      if (a.noise < 0.0 || a.noise >= 1.0) {
        throw Error(ErrorCode::config, "noise must be in [0, 1)");
      }
    }
  }

  // Env spec file: {"archetypes": [{"name", "gold_size",
  //   "action_hits": {"single_element": [0,...], ...}, "noise"}]}
  static SimEnv from_json(const json& j) {
    if (!j.contains("archetypes") || !j["archetypes"].is_array() || j["archetypes"].empty()) {
      throw Error(ErrorCode::config, "env spec needs a non-empty 'archetypes' array");
    }
    std::vector<SimArchetype> archetypes;
    for (const auto& a : j["archetypes"]) {
      SimArchetype arch;
      arch.name = a.value("name", "archetype" + std::to_string(archetypes.size()));
      arch.gold_size = a.value("gold_size", size_t{1});
      arch.noise = a.value("noise", 0.0);
      if (a.contains("action_hits")) {
        for (size_t act = 0; act < 5; ++act) {
          const char* key = to_string(static_cast<PlannerAction>(act));
          if (a["action_hits"].contains(key)) {
            for (const auto& idx : a["action_hits"][key]) {
              arch.action_hits[act].push_back(idx.get<int>());
            }
          }
        }
      }
      archetypes.push_back(std::move(arch));
    }
    return SimEnv(std::move(archetypes));
  }

  static SimEnv from_file(const std::string& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::malformed_record, path + ": invalid JSON");
    return SimEnv(from_json(j).archetypes_);
  }

  const std::vector<SimArchetype>& archetypes() const { return archetypes_; }
  size_t n_states() const { return archetypes_.size() * kMaxRounds * kBuckets; }

  size_t state_id(size_t archetype, int round, size_t covered, size_t gold_size) const {
    double frac = static_cast<double>(covered) / static_cast<double>(gold_size);
    size_t bucket = static_cast<size_t>(std::floor(frac * (kBuckets - 1) + 1e-9));
    bucket = std::min(bucket, kBuckets - 1);
    return (archetype * kMaxRounds + static_cast<size_t>(round - 1)) * kBuckets + bucket;
  }

  GoldSet gold_set(size_t archetype) const {
    GoldSet gold;
    for (size_t i = 0; i < archetypes_[archetype].gold_size; ++i) {
      gold.insert(gold_id(i));
    }
    return gold;
  }

  // Runs one episode under the policy. Rounds 1..4 are policy decisions; a
  // 5th round, when reached, is the required exit and contributes no action
  // term. The resulting trajectory carries training annotations, so the
  // reward layer treats it exactly like a recorded retrieval run.
  SimRollout rollout(const ToyPolicy& policy, size_t archetype, std::mt19937_64& rng) const {
    const SimArchetype& arch = archetypes_[archetype];
    SimRollout r;
    r.archetype = archetype;
    r.trajectory.query_id = arch.name;
    r.trajectory.mode = MasMode::training;
    CandidatePool pool;  // every pool id is a gold id here, so |pool| = coverage
    bool any_retrieval = false;

    for (int round = 1; round <= kMaxRounds; ++round) {
      bool forced = (round == kMaxRounds);
      size_t action;
      if (forced) {
        action = static_cast<size_t>(PlannerAction::exit);
      } else {
        size_t state = state_id(archetype, round, pool.size(), arch.gold_size);
        action = policy.sample(state, rng);
        r.state_actions.emplace_back(state, action);
      }

      IterationRecord rec;
      rec.index = round;
      rec.decision.action = static_cast<PlannerAction>(action);
      rec.decision.reason = forced ? "required exit round" : "sampled";
      rec.new_gold = 0;

      if (rec.decision.action == PlannerAction::exit) {
        if (forced) rec.overridden_from = "required";
        r.trajectory.records.push_back(std::move(rec));
        if (!any_retrieval && !forced) {
          r.trajectory.terminated_by = TerminatedBy::invalid_early_exit;
        } else {
          r.trajectory.terminated_by =
              forced ? TerminatedBy::iteration_cap : TerminatedBy::exit_action;
        }
        break;
      }

      // Rewrite round: deterministic hit set, each index dropped with
      // probability `noise`.
      std::vector<RetrievalHit> hits;
      int hit_rank = 1;
      for (int idx : arch.action_hits[action]) {
        if (arch.noise > 0.0 && uniform_unit(rng) < arch.noise) continue;
        RetrievalHit h;
        h.statute_id = gold_id(static_cast<size_t>(idx));
        h.similarity = 1.0;
        h.score = 1.0;
        h.rank = hit_rank++;
        hits.push_back(std::move(h));
      }
      size_t before = pool.size();
      pool = merge_dedup(std::move(pool), hits, round,
                         "sim:" + std::string(to_string(rec.decision.action)));
      rec.retrieval_calls = 1;
      rec.new_unique = static_cast<int>(pool.size() - before);
      rec.new_gold = rec.new_unique;
      any_retrieval = true;
      r.trajectory.records.push_back(std::move(rec));
    }

    if (r.trajectory.terminated_by != TerminatedBy::invalid_early_exit) {
      r.trajectory.pool = pool;
    }
    return r;
  }

  static std::string gold_id(size_t index) { return "g" + std::to_string(index); }

 private:
  std::vector<SimArchetype> archetypes_;
};

// Whole-trajectory log-probability under the policy (Sum of per-decision
// terms; the required exit round contributes none).
inline double rollout_log_prob(const ToyPolicy& policy, const SimRollout& rollout) {
  double lp = 0.0;
  for (const auto& [state, action] : rollout.state_actions) {
    lp += policy.log_prob(state, action);
  }
  return lp;
}

// Mean over groups of the group-normalized objective, recomputed from the
// stored decisions. Used by the finite-difference oracle.
inline double grpo_batch_loss(const ToyPolicy& policy, const std::vector<SimGroup>& batch,
                              const RewardConfig& config) {
  if (batch.empty()) throw Error(ErrorCode::empty_input, "empty batch");
  double loss = 0.0;
  for (const auto& group : batch) {
    std::vector<double> advantages = normalize_group(group.rewards, config.epsilon);
    std::vector<double> log_probs;
    log_probs.reserve(group.rollouts.size());
    for (const auto& r : group.rollouts) log_probs.push_back(rollout_log_prob(policy, r));
    loss += grpo_loss(advantages, log_probs);
  }
  return loss / static_cast<double>(batch.size());
}

// Analytic gradient of grpo_batch_loss w.r.t. every logit. Advantages are
// score-function constants: d log pi(a|s) / d logit(s,b) = [a==b] - pi(b|s).
inline std::vector<double> loss_gradient(const ToyPolicy& policy,
                                         const std::vector<SimGroup>& batch,
                                         const RewardConfig& config) {
  if (batch.empty()) throw Error(ErrorCode::empty_input, "empty batch");
  std::vector<double> grad(policy.logits().size(), 0.0);
  double group_weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& group : batch) {
    std::vector<double> advantages = normalize_group(group.rewards, config.epsilon);
    double k = static_cast<double>(group.rollouts.size());
    for (size_t i = 0; i < group.rollouts.size(); ++i) {
      double coeff = -group_weight * advantages[i] / k;
      for (const auto& [state, action] : group.rollouts[i].state_actions) {
        auto p = policy.probs(state);
        double* g = grad.data() + state * ToyPolicy::kNumActions;
        for (size_t b = 0; b < ToyPolicy::kNumActions; ++b) {
          double indicator = (b == action) ? 1.0 : 0.0;
          g[b] += coeff * (indicator - p[b]);
        }
      }
    }
  }
  return grad;
}

struct TrainConfig {
  size_t updates = 200;
  double learning_rate = 0.1;
  RewardConfig reward;
};

struct TrainResult {
  std::vector<double> curve;  // mean sampled reward per update
  ToyPolicy policy;
};

// Samples one group of K rollouts for one archetype with an RNG stream
// derived from (seed, update, group, rollout); deterministic regardless of
// scheduling, so concurrent sampling cannot change results.
inline SimGroup sample_group(const SimEnv& env, const ToyPolicy& policy, size_t archetype,
                             uint64_t seed, uint64_t update, uint64_t group_index,
                             const RewardConfig& reward_config) {
  SimGroup group;
  group.archetype = archetype;
  GoldSet gold = env.gold_set(archetype);
  for (size_t k = 0; k < reward_config.group_size; ++k) {
    std::mt19937_64 rng = derive_rng(seed, update, group_index, k);
    SimRollout r = env.rollout(policy, archetype, rng);
    group.rewards.push_back(total_reward(r.trajectory, gold, reward_config).total);
    group.rollouts.push_back(std::move(r));
  }
  return group;
}

// Plain gradient ascent on the group-normalized objective. Archetypes are
// assigned to groups round-robin so every family is trained on.
inline TrainResult train_toy(const SimEnv& env, const TrainConfig& config, uint64_t seed) {
  config.reward.validate();
  TrainResult result{std::vector<double>{}, ToyPolicy(env.n_states())};
  size_t n_arch = env.archetypes().size();
  for (size_t update = 0; update < config.updates; ++update) {
    std::vector<SimGroup> batch;
    batch.reserve(config.reward.groups_per_batch);
    double reward_sum = 0.0;
    size_t reward_count = 0;
    for (size_t g = 0; g < config.reward.groups_per_batch; ++g) {
      size_t archetype = (update * config.reward.groups_per_batch + g) % n_arch;
      SimGroup group =
          sample_group(env, result.policy, archetype, seed, update, g, config.reward);
      for (double r : group.rewards) {
        reward_sum += r;
        ++reward_count;
      }
      batch.push_back(std::move(group));
    }
    std::vector<double> grad = loss_gradient(result.policy, batch, config.reward);
    for (size_t i = 0; i < grad.size(); ++i) {
      result.policy.logits()[i] -= config.learning_rate * grad[i];
    }
    result.curve.push_back(reward_sum / static_cast<double>(reward_count));
  }
  return result;
}

}  // namespace malr
