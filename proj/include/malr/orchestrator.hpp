#pragma once

#include <future>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "malr/agents.hpp"
#include "malr/common.hpp"
#include "malr/corpus.hpp"
#include "malr/retrieval.hpp"

namespace malr {

enum class MasMode { inference, training };

inline const char* to_string(MasMode mode) {
  return mode == MasMode::inference ? "inference" : "training";
}

enum class TerminatedBy {
  exit_action,
  iteration_cap,
  invalid_early_exit,
  provider_error,  // aborted mid-run; a partial pool may still be present
};

inline const char* to_string(TerminatedBy t) {
  switch (t) {
    case TerminatedBy::exit_action: return "exit_action";
    case TerminatedBy::iteration_cap: return "iteration_cap";
    case TerminatedBy::invalid_early_exit: return "invalid_early_exit";
    case TerminatedBy::provider_error: return "provider_error";
  }
  return "unknown";
}

inline std::optional<TerminatedBy> terminated_by_from_string(std::string_view s) {
  for (TerminatedBy t : {TerminatedBy::exit_action, TerminatedBy::iteration_cap,
                         TerminatedBy::invalid_early_exit, TerminatedBy::provider_error}) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

struct PoolEntry {
  std::string statute_id;
  double best_score = 0.0;
  int first_iteration = 0;
  std::string source_reformulation;
};

// Deduplicated union of every retrieval in one run. Entries keep first-seen
// order; re-merging the same hits is a no-op apart from best_score updates.
struct CandidatePool {
  std::vector<PoolEntry> entries;

  size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  const PoolEntry* find(const std::string& id) const {
    for (const auto& e : entries) {
      if (e.statute_id == id) return &e;
    }
    return nullptr;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.statute_id);
    return out;
  }
};

// New ids append in first-seen order; duplicates keep their first_iteration
// and take the max score. Idempotent by construction.
inline CandidatePool merge_dedup(CandidatePool pool, const std::vector<RetrievalHit>& hits,
                                 int iteration, const std::string& source) {
  std::unordered_map<std::string, size_t> index;
  index.reserve(pool.entries.size());
  for (size_t i = 0; i < pool.entries.size(); ++i) index[pool.entries[i].statute_id] = i;
  for (const auto& h : hits) {
    auto it = index.find(h.statute_id);
    if (it == index.end()) {
      PoolEntry e;
      e.statute_id = h.statute_id;
      e.best_score = h.score;
      e.first_iteration = iteration;
      e.source_reformulation = source;
      index[h.statute_id] = pool.entries.size();
      pool.entries.push_back(std::move(e));
    } else if (h.score > pool.entries[it->second].best_score) {
      pool.entries[it->second].best_score = h.score;
    }
  }
  return pool;
}

struct IterationRecord {
  int index = 0;  // 1-based planner round
  PlannerDecision decision;
  std::optional<std::string> overridden_from;  // action the planner actually produced
  std::vector<std::string> reformulations;
  int retrieval_calls = 0;
  int new_unique = 0;
  std::optional<int> new_gold;  // training mode only
  bool skipped = false;         // rewrite parse failure consumed the round
};

struct Trajectory {
  std::string query_id;
  std::string trajectory_id = "0";
  MasMode mode = MasMode::inference;
  std::vector<IterationRecord> records;
  TerminatedBy terminated_by = TerminatedBy::exit_action;
  CandidatePool pool;
  std::optional<std::string> error;  // provider diagnostic when aborted

  int total_retrieval_calls() const {
    int n = 0;
    for (const auto& r : records) n += r.retrieval_calls;
    return n;
  }
};

struct BudgetReport {
  long retrieval_calls = 0;
  long embedding_candidates = 0;  // dense_k per retrieval call
  long pool_size = 0;
};

inline BudgetReport budget(const Trajectory& trajectory, const RetrievalConfig& config) {
  BudgetReport report;
  report.retrieval_calls = trajectory.total_retrieval_calls();
  report.embedding_candidates = report.retrieval_calls * static_cast<long>(config.dense_k);
  report.pool_size = static_cast<long>(trajectory.pool.size());
  return report;
}

// Planner view of the run so far: counts and top titles only — never texts
// of full statutes and never anything derived from gold labels.
inline PlannerContext context_summary(const std::string& query_text,
                                      const std::vector<IterationRecord>& records,
                                      const CandidatePool& pool, const Corpus* corpus,
                                      int iteration, bool force_exit) {
  PlannerContext ctx;
  ctx.original_query = query_text;
  ctx.iteration = iteration;
  ctx.force_exit = force_exit;
  for (const auto& r : records) {
    ctx.actions_taken.push_back(to_string(r.decision.action));
    ctx.new_unique_counts.push_back(r.new_unique);
  }
  ctx.pool_size = static_cast<int>(pool.size());
  std::vector<const PoolEntry*> by_score;
  by_score.reserve(pool.entries.size());
  for (const auto& e : pool.entries) by_score.push_back(&e);
  std::sort(by_score.begin(), by_score.end(), [](const PoolEntry* a, const PoolEntry* b) {
    if (a->best_score != b->best_score) return a->best_score > b->best_score;
    return a->statute_id < b->statute_id;
  });
  size_t take = std::min<size_t>(by_score.size(), 10);
  for (size_t i = 0; i < take; ++i) {
    const std::string& id = by_score[i]->statute_id;
    const Statute* s = corpus ? corpus->find(id) : nullptr;
    ctx.top_titles.push_back(s && !s->title.empty() ? s->title : id);
  }
  return ctx;
}

struct MasConfig {
  RetrievalConfig retrieval;
  AgentTuning tuning;
  int max_rewrite_iterations = 4;  // a final exit round follows, so at most 5 rounds
  int parse_retries = 2;
  bool concurrent_reformulations = true;
};

struct MasResult {
  CandidatePool pool;
  Trajectory trajectory;
  BudgetReport budget;
};

// Planner-driven reformulation/retrieval loop for one query.
//
// Inference mode never sees gold labels: `gold` must be null, recall is never
// computed, and an exit before the first retrieval is overridden to a
// single_element rewrite. Training mode records per-round new-gold counts
// and lets an invalid early exit terminate the trajectory (the caller's
// reward layer applies the fallback penalty).
class MasRunner {
 public:
  MasRunner(Retriever& retriever, ChatClient& client, const PromptLibrary& prompts,
            MasConfig config, const Corpus* corpus = nullptr)
      : retriever_(retriever), client_(client), prompts_(prompts), config_(config),
        corpus_(corpus) {
    config_.retrieval.validate();
    if (config_.max_rewrite_iterations < 1 || config_.max_rewrite_iterations > 4) {
      throw Error(ErrorCode::config, "max_rewrite_iterations must be in [1, 4]");
    }
  }

  MasResult run(const std::string& query_id, const std::string& query_text, MasMode mode,
                const GoldSet* gold = nullptr, const std::string& trajectory_id = "0") {
    if (mode == MasMode::inference && gold != nullptr) {
      throw Error(ErrorCode::config, "inference mode must not receive gold labels");
    }
    if (mode == MasMode::training && gold == nullptr) {
      throw Error(ErrorCode::missing_training_annotations,
                  "training mode requires gold labels");
    }

    Trajectory traj;
    traj.query_id = query_id;
    traj.trajectory_id = trajectory_id;
    traj.mode = mode;
    CandidatePool pool;
    GoldSet covered_gold;
    std::vector<std::string> prior_rewrites;
    int total_retrievals = 0;
    std::optional<TerminatedBy> terminated;

    const int max_rounds = config_.max_rewrite_iterations + 1;
    for (int round = 1; round <= max_rounds && !terminated; ++round) {
      bool force_exit = (round == max_rounds);
      PlannerDecision decision;
      std::optional<std::string> overridden_from;
      try {
        ChatRequest req = render_planner_prompt(
            prompts_, context_summary(query_text, traj.records, pool, corpus_, round, force_exit),
            config_.tuning);
        decision = chat_and_parse<PlannerDecision>(
            client_, req, [](const std::string& t) { return parse_planner_decision(t); },
            config_.parse_retries);
      } catch (const Error& e) {
        if (e.is_provider_error()) {
          traj.error = e.what();
          terminated = TerminatedBy::provider_error;
          break;
        }
        // Unrecoverable parse failure: default to single_element, never exit.
        decision.action = PlannerAction::single_element;
        decision.reason = "planner output unparseable after retries";
      }

      if (force_exit && decision.action != PlannerAction::exit) {
        overridden_from = to_string(decision.action);
        decision.action = PlannerAction::exit;
        decision.reason = "iteration cap reached";
      }

      if (decision.action == PlannerAction::exit) {
        bool before_any_retrieval = (total_retrievals == 0);
        bool planner_chose_exit = !overridden_from.has_value();
        if (before_any_retrieval && planner_chose_exit && mode == MasMode::training) {
          // The fallback-penalty case: the planner itself exited before any
          // retrieval. Cap-forced exits are not penalized.
          IterationRecord rec;
          rec.index = round;
          rec.decision = decision;
          rec.new_gold = 0;
          traj.records.push_back(std::move(rec));
          terminated = TerminatedBy::invalid_early_exit;
          break;
        }
        // The inference guard targets the round-1 accidental exit; a later
        // exit with an empty pool (every earlier round skipped) is honest.
        if (round == 1 && planner_chose_exit && mode == MasMode::inference) {
          overridden_from = to_string(PlannerAction::exit);
          decision.action = PlannerAction::single_element;
          decision.reason = "exit before first retrieval overridden";
        } else {
          IterationRecord rec;
          rec.index = round;
          rec.decision = decision;
          rec.overridden_from = overridden_from;
          if (mode == MasMode::training) rec.new_gold = 0;
          traj.records.push_back(std::move(rec));
          terminated = planner_chose_exit ? TerminatedBy::exit_action : TerminatedBy::iteration_cap;
          break;
        }
      }

      // Rewrite round.
      IterationRecord rec;
      rec.index = round;
      rec.decision = decision;
      rec.overridden_from = overridden_from;
      if (mode == MasMode::training) rec.new_gold = 0;

      std::vector<std::string> reformulations;
      try {
        reformulations = generate_reformulations(decision.action, query_text, prior_rewrites);
      } catch (const Error& e) {
        if (e.is_provider_error()) {
          traj.error = e.what();
          terminated = TerminatedBy::provider_error;
          traj.records.push_back(std::move(rec));
          break;
        }
        rec.skipped = true;  // parse failure after retries: round consumed, no retrieval
        traj.records.push_back(std::move(rec));
        continue;
      }

      rec.reformulations = reformulations;
      prior_rewrites.insert(prior_rewrites.end(), reformulations.begin(), reformulations.end());

      std::optional<std::string> retrieval_error;
      auto batches = retrieve_all(reformulations, retrieval_error);
      size_t before = pool.size();
      for (size_t i = 0; i < batches.size(); ++i) {
        pool = merge_dedup(std::move(pool), batches[i], round, reformulations[i]);
      }
      rec.retrieval_calls = static_cast<int>(batches.size());
      total_retrievals += rec.retrieval_calls;
      rec.new_unique = static_cast<int>(pool.size() - before);
      if (mode == MasMode::training) {
        int fresh = 0;
        for (size_t i = before; i < pool.entries.size(); ++i) {
          const std::string& id = pool.entries[i].statute_id;
          if (gold->count(id) && covered_gold.insert(id).second) ++fresh;
        }
        rec.new_gold = fresh;
      }
      traj.records.push_back(std::move(rec));

      if (retrieval_error) {
        traj.error = retrieval_error;
        terminated = TerminatedBy::provider_error;
        break;
      }
    }

    traj.terminated_by = terminated.value_or(TerminatedBy::iteration_cap);
    if (terminated == TerminatedBy::invalid_early_exit) {
      pool = CandidatePool{};  // the run produced nothing usable
    }
    traj.pool = pool;
    MasResult result;
    result.pool = std::move(pool);
    result.budget = budget(traj, config_.retrieval);
    result.trajectory = std::move(traj);
    return result;
  }

 private:
  std::vector<std::string> generate_reformulations(PlannerAction action,
                                                   const std::string& query_text,
                                                   const std::vector<std::string>& prior) {
    if (action == PlannerAction::semantic_abnormality) {
      return run_semantic_abnormality(client_, prompts_, query_text, prior,
                                      config_.parse_retries, config_.tuning)
          .reformulations;
    }
    AgentRole role = *role_for_action(action);
    RewriteContext ctx;
    ctx.original_query = query_text;
    ctx.prior_rewrites = prior;
    ChatRequest req = render_rewrite_prompt(prompts_, role, ctx, config_.tuning);
    return chat_and_parse<RewriteOutput>(
               client_, req, [role](const std::string& t) { return parse_rewrites(t, role); },
               config_.parse_retries)
        .reformulations;
  }

  // Retrieves every reformulation of one round, concurrently when configured,
  // and returns the successful batches in reformulation order. On a provider
  // failure the error is reported and later batches are dropped, so partial
  // results still merge deterministically.
  std::vector<std::vector<RetrievalHit>> retrieve_all(
      const std::vector<std::string>& reformulations, std::optional<std::string>& error) {
    std::vector<std::vector<RetrievalHit>> batches;
    if (config_.concurrent_reformulations && reformulations.size() > 1) {
      std::vector<std::future<std::vector<RetrievalHit>>> futures;
      futures.reserve(reformulations.size());
      for (const auto& r : reformulations) {
        futures.push_back(
            std::async(std::launch::async, [this, &r] { return retriever_.retrieve(r); }));
      }
      for (auto& f : futures) {
        try {
          if (!error) batches.push_back(f.get());
          else f.get();  // drain so the future does not block in its destructor
        } catch (const Error& e) {
          if (!error) error = e.what();
        }
      }
    } else {
      for (const auto& r : reformulations) {
        try {
          batches.push_back(retriever_.retrieve(r));
        } catch (const Error& e) {
          error = e.what();
          break;
        }
      }
    }
    return batches;
  }

  Retriever& retriever_;
  ChatClient& client_;
  const PromptLibrary& prompts_;
  MasConfig config_;
  const Corpus* corpus_;
};

}  // namespace malr
