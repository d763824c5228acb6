#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "malr/agents.hpp"
#include "malr/config.hpp"
#include "malr/corpus.hpp"
#include "malr/grpo.hpp"
#include "malr/http_clients.hpp"
#include "malr/metrics.hpp"
#include "malr/orchestrator.hpp"
#include "malr/reranker.hpp"
#include "malr/retrieval.hpp"
#include "malr/trajectory_log.hpp"

namespace malr {

// Runs fn(0..n-1) on up to `jobs` workers. The first exception wins and is
// rethrown after all workers finish, so partial work never goes half-reported.
template <typename Fn>
void parallel_for(size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&] {
    size_t i;
    while ((i = next.fetch_add(1)) < n) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  size_t workers = std::min<size_t>(static_cast<size_t>(jobs), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Chat fixture file: replay map when lines carry request_hash, otherwise a
// FIFO queue of {"response": ...} lines.
inline std::unique_ptr<ChatClient> load_chat_fixture(const std::string& path) {
  bool keyed = false;
  std::vector<std::string> queued;
  for_each_line(path, [&](size_t line_no, const std::string& line) {
    if (trim(line).empty()) return;
    json j = parse_json_line(path, line_no, line);
    if (j.contains("request_hash")) {
      keyed = true;
      return;
    }
    if (!j.contains("response") || !j["response"].is_string()) {
      throw Error(ErrorCode::malformed_record,
                  path + ":" + std::to_string(line_no) + ": expected 'response'");
    }
    queued.push_back(j["response"].get<std::string>());
  });
  if (keyed) return std::make_unique<ReplayChatClient>(ReplayChatClient::from_file(path));
  return std::make_unique<ScriptedChatClient>(std::move(queued));
}

// Everything a run needs, wired either to live endpoints or to fixtures.
struct Runtime {
  Corpus corpus;
  std::vector<Query> queries;
  EmbeddingStore store;
  std::unique_ptr<EmbeddingProvider> embedder;
  std::unique_ptr<ChatClient> mas_chat;
  std::unique_ptr<ChatClient> rerank_chat;
  // Inner clients kept alive while recording wrappers sit in front of them.
  std::unique_ptr<ChatClient> mas_chat_inner;
  std::unique_ptr<ChatClient> rerank_chat_inner;
  PromptLibrary prompts = PromptLibrary::builtin();
  // Scripted queue fixtures are positional, so runs using them stay on one
  // thread regardless of the jobs setting.
  bool sequential_only = false;
};

inline Runtime build_runtime(const RunConfig& cfg, bool need_chat) {
  cfg.validate();
  cfg.validate_files();
  if (cfg.corpus_path.empty()) throw Error(ErrorCode::io, "corpus file not found: (unset)");
  if (cfg.queries_path.empty()) throw Error(ErrorCode::io, "query file not found: (unset)");

  Runtime rt;
  rt.corpus = load_corpus(cfg.corpus_path);
  rt.queries =
      load_queries(cfg.queries_path, cfg.unlabeled ? LabelMode::unlabeled : LabelMode::labeled);
  auto missing = validate(rt.queries, rt.corpus);
  if (!missing.empty()) {
    std::cerr << "warning: " << missing.size() << " gold id(s) missing from the corpus"
              << " (first: query " << missing.front().first << " -> " << missing.front().second
              << ")\n";
  }

  namespace fs = std::filesystem;
  std::string store_path = cfg.embeddings_path;
  if (!cfg.mock_fixtures_dir.empty()) {
    std::string candidate = cfg.mock_fixtures_dir + "/embeddings.jsonl";
    if (fs::exists(candidate)) store_path = candidate;
  }
  if (store_path.empty()) {
    throw Error(ErrorCode::io, "embedding file not found: (unset)");
  }
  rt.store = EmbeddingStore::load(store_path);
  rt.store.check_against(rt.corpus);

  if (!cfg.mock_fixtures_dir.empty() &&
      fs::exists(cfg.mock_fixtures_dir + "/text_embeddings.jsonl")) {
    rt.embedder = std::make_unique<TableEmbeddingProvider>(
        TableEmbeddingProvider::from_file(cfg.mock_fixtures_dir + "/text_embeddings.jsonl"));
  } else if (!cfg.embed_endpoint.empty()) {
    rt.embedder = std::make_unique<HttpEmbeddingProvider>(cfg.embed_endpoint);
  } else {
    rt.embedder = std::make_unique<HashingEmbeddingProvider>(rt.store.dim(), cfg.seed);
  }

  if (!cfg.prompts_dir.empty()) rt.prompts = PromptLibrary::from_dir(cfg.prompts_dir);

  if (need_chat) {
    if (!cfg.mock_fixtures_dir.empty() && fs::exists(cfg.mock_fixtures_dir + "/mas_chat.jsonl")) {
      rt.mas_chat = load_chat_fixture(cfg.mock_fixtures_dir + "/mas_chat.jsonl");
    } else if (!cfg.chat_endpoint.empty()) {
      rt.mas_chat = std::make_unique<HttpChatClient>(cfg.chat_endpoint, cfg.chat_model);
    }
    if (!cfg.mock_fixtures_dir.empty() &&
        fs::exists(cfg.mock_fixtures_dir + "/rerank_chat.jsonl")) {
      rt.rerank_chat = load_chat_fixture(cfg.mock_fixtures_dir + "/rerank_chat.jsonl");
    } else if (!cfg.rerank_endpoint.empty()) {
      rt.rerank_chat = std::make_unique<HttpChatClient>(cfg.rerank_endpoint, cfg.rerank_model);
    }
    if (rt.mas_chat && dynamic_cast<ScriptedChatClient*>(rt.mas_chat.get())) {
      rt.sequential_only = true;
    }
    if (rt.rerank_chat && dynamic_cast<ScriptedChatClient*>(rt.rerank_chat.get())) {
      rt.sequential_only = true;
    }
    if (!cfg.record_fixtures_dir.empty()) {
      fs::create_directories(cfg.record_fixtures_dir);
      if (rt.mas_chat) {
        rt.mas_chat_inner = std::move(rt.mas_chat);
        rt.mas_chat = std::make_unique<RecordingChatClient>(
            *rt.mas_chat_inner, cfg.record_fixtures_dir + "/mas_chat.jsonl");
      }
      if (rt.rerank_chat) {
        rt.rerank_chat_inner = std::move(rt.rerank_chat);
        rt.rerank_chat = std::make_unique<RecordingChatClient>(
            *rt.rerank_chat_inner, cfg.record_fixtures_dir + "/rerank_chat.jsonl");
      }
    }
  }
  return rt;
}

inline int effective_jobs(const Runtime& rt, const RunConfig& cfg) {
  return rt.sequential_only ? 1 : cfg.jobs;
}

// ---------------------------------------------------------------------------
// Stage drivers.

inline std::vector<MasResult> run_mas_batch(Runtime& rt, const RunConfig& cfg) {
  if (!rt.mas_chat) {
    throw Error(ErrorCode::config, "no chat provider configured for the reformulation loop");
  }
  MasMode mode = cfg.mas_mode();
  MasConfig mas_cfg;
  mas_cfg.retrieval = cfg.retrieval;
  mas_cfg.tuning = cfg.tuning;
  mas_cfg.parse_retries = cfg.parse_retries;

  Retriever retriever(rt.store, *rt.embedder, cfg.retrieval);
  MasRunner runner(retriever, *rt.mas_chat, rt.prompts, mas_cfg, &rt.corpus);

  size_t n = rt.queries.size();
  size_t total = n * static_cast<size_t>(cfg.rollouts);
  std::vector<MasResult> results(total);
  parallel_for(total, effective_jobs(rt, cfg), [&](size_t i) {
    size_t qi = i / static_cast<size_t>(cfg.rollouts);
    size_t rollout = i % static_cast<size_t>(cfg.rollouts);
    const Query& q = rt.queries[qi];
    GoldSet gold;
    const GoldSet* gold_ptr = nullptr;
    if (mode == MasMode::training) {
      if (!q.labeled) {
        throw Error(ErrorCode::missing_training_annotations,
                    "training mode needs labeled queries; query " + q.id + " has no gold");
      }
      gold = q.gold_set();
      gold_ptr = &gold;
    }
    results[i] = runner.run(q.id, q.text, mode, gold_ptr, std::to_string(rollout));
  });
  return results;
}

inline void write_trajectory_log_file(const std::vector<MasResult>& results,
                                      const std::string& path, uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write file: " + path);
  for (const auto& r : results) write_trajectory_log(out, r.trajectory, seed);
}

// Single-shot retrieval, one dense call per query, emitted as a summary-only
// pool log that `rerank` accepts.
//   pruned:   dense_k candidates cut to pruned_k (one loop round's worth)
//   baseline: baseline_k candidates kept whole (the fixed-budget baseline);
//             the lightweight pass is order-preserving by default and can be
//             disabled via baseline_lightweight_rerank.
enum class SingleShot { pruned, baseline };

inline std::vector<Trajectory> run_single_shot_batch(Runtime& rt, const RunConfig& cfg,
                                                     SingleShot kind) {
  size_t n = rt.queries.size();
  std::vector<Trajectory> out(n);
  parallel_for(n, effective_jobs(rt, cfg), [&](size_t i) {
    const Query& q = rt.queries[i];
    EmbeddingVector v = rt.embedder->embed(q.text);
    std::vector<RetrievalHit> hits;
    if (kind == SingleShot::baseline) {
      hits = dense_topk(rt.store, v, cfg.retrieval.baseline_k);
      if (cfg.baseline_lightweight_rerank) {
        hits = lightweight_rerank(q.text, hits, hits.size());
      }
    } else {
      hits = dense_topk(rt.store, v, cfg.retrieval.dense_k);
      hits = lightweight_rerank(q.text, hits, cfg.retrieval.pruned_k);
    }
    Trajectory traj;
    traj.query_id = q.id;
    traj.trajectory_id = kind == SingleShot::baseline ? "baseline" : "single_shot";
    traj.terminated_by = TerminatedBy::exit_action;
    traj.pool = merge_dedup(CandidatePool{}, hits, 1, q.text);
    out[i] = std::move(traj);
  });
  return out;
}

inline void write_pool_log_file(const std::vector<Trajectory>& trajectories,
                                const std::string& path, uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write file: " + path);
  for (const auto& t : trajectories) {
    Trajectory summary_only = t;
    summary_only.records.clear();
    write_trajectory_log(out, summary_only, seed);
  }
}

struct RerankStageResult {
  std::vector<RankedList> rankings;
  size_t fallbacks = 0;
};

inline RerankStageResult rerank_trajectories(Runtime& rt,
                                             const std::vector<Trajectory>& trajectories,
                                             const RunConfig& cfg) {
  if (!rt.rerank_chat) {
    throw Error(ErrorCode::config, "no chat provider configured for the final reranker");
  }
  std::unordered_map<std::string, const Query*> by_id;
  for (const auto& q : rt.queries) by_id[q.id] = &q;
  std::unordered_set<std::string> seen;
  for (const auto& t : trajectories) {
    if (!seen.insert(t.query_id).second) {
      throw Error(ErrorCode::duplicate_id,
                  "rerank input has multiple trajectories for query " + t.query_id +
                      "; rerank one rollout at a time");
    }
  }

  RerankStageResult stage;
  stage.rankings.resize(trajectories.size());
  std::atomic<size_t> fallbacks{0};
  parallel_for(trajectories.size(), effective_jobs(rt, cfg), [&](size_t i) {
    const Trajectory& t = trajectories[i];
    auto qit = by_id.find(t.query_id);
    if (qit == by_id.end()) {
      throw Error(ErrorCode::malformed_record, "trajectory for unknown query " + t.query_id);
    }
    RankedList ranked;
    ranked.query_id = t.query_id;
    if (!t.pool.empty()) {
      RerankRequest request =
          build_rerank_request(t.pool, rt.corpus, qit->second->text, cfg.rerank);
      RerankResult result = rerank(request, *rt.rerank_chat, rt.prompts, cfg.rerank);
      if (result.used_fallback) fallbacks.fetch_add(1);
      ranked.ids = std::move(result.ranked_ids);
    }
    stage.rankings[i] = std::move(ranked);
  });
  stage.fallbacks = fallbacks.load();
  return stage;
}

inline void write_ranked_lists(const std::vector<RankedList>& rankings,
                               const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write file: " + path);
  for (const auto& r : rankings) {
    ojson j;
    j["query_id"] = r.query_id;
    j["ranked_ids"] = r.ids;
    out << j.dump() << "\n";
  }
}

inline std::vector<RankedList> read_ranked_lists(const std::string& path) {
  std::vector<RankedList> out;
  for_each_line(path, [&](size_t line_no, const std::string& line) {
    if (trim(line).empty()) return;
    json j = parse_json_line(path, line_no, line);
    if (!j.contains("query_id") || !j.contains("ranked_ids") || !j["ranked_ids"].is_array()) {
      throw Error(ErrorCode::malformed_record,
                  path + ":" + std::to_string(line_no) + ": expected {query_id, ranked_ids}");
    }
    RankedList r;
    r.query_id = j["query_id"].get<std::string>();
    for (const auto& id : j["ranked_ids"]) r.ids.push_back(id.get<std::string>());
    out.push_back(std::move(r));
  });
  return out;
}

inline MetricReport evaluate_against_queries(const std::vector<RankedList>& rankings,
                                             const std::vector<Query>& queries, size_t k,
                                             MrrMissMode mode) {
  std::vector<std::pair<std::string, GoldSet>> gold;
  gold.reserve(queries.size());
  for (const auto& q : queries) gold.emplace_back(q.id, q.labeled ? q.gold_set() : GoldSet{});
  return evaluate_rankings(rankings, gold, k, mode);
}

// ---------------------------------------------------------------------------
// Reports.

inline ojson metric_report_json(const MetricReport& report) {
  ojson j;
  j["k"] = report.k;
  j["mrr_mode"] =
      report.miss_mode == MrrMissMode::rank_k_plus_one ? "paper" : "conventional";
  j["recall"] = report.recall;
  j["mrr"] = report.mrr;
  j["ndcg"] = report.ndcg;
  j["hitrate"] = report.hitrate;
  j["evaluated"] = report.evaluated;
  j["skipped_unlabeled"] = report.skipped;
  ojson per = ojson::array();
  for (const auto& pq : report.per_query) {
    ojson p;
    p["query_id"] = pq.query_id;
    p["recall"] = pq.recall;
    p["mrr"] = pq.mrr;
    p["ndcg"] = pq.ndcg;
    p["hitrate"] = pq.hitrate;
    per.push_back(std::move(p));
  }
  j["per_query"] = std::move(per);
  return j;
}

inline void print_metric_table(std::ostream& out, const MetricReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-14s %8s\n", "Metric", "Value");
  out << buf;
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%-14s %8.4f\n", name, v);
    out << buf;
  };
  std::string k = std::to_string(report.k);
  row(("Recall@" + k).c_str(), report.recall);
  row(("MRR@" + k).c_str(), report.mrr);
  row(("nDCG@" + k).c_str(), report.ndcg);
  row(("HitRate@" + k).c_str(), report.hitrate);
  out << "Queries evaluated: " << report.evaluated;
  if (report.skipped > 0) out << " (skipped unlabeled: " << report.skipped << ")";
  out << "\n";
}

inline void print_stats_table(std::ostream& out, const CorpusStats& stats) {
  char buf[160];
  auto row = [&](const char* name, const std::string& value) {
    std::snprintf(buf, sizeof(buf), "%-24s %12s\n", name, value.c_str());
    out << buf;
  };
  auto fixed2 = [](double v) {
    char b[64];
    std::snprintf(b, sizeof(b), "%.2f", v);
    return std::string(b);
  };
  row("Statistic", "Value");
  row("Queries", std::to_string(stats.n_queries));
  row("Avg. query len.", fixed2(stats.avg_query_len));
  row("Avg. statute len.", fixed2(stats.avg_statute_len));
  row("Statute corpus size", std::to_string(stats.corpus_size));
  row("Avg. relevant statutes", fixed2(stats.avg_relevant));
}

struct PipelineOutcome {
  std::vector<MasResult> mas_results;         // empty in baseline mode
  std::vector<Trajectory> pool_trajectories;  // what went into the reranker
  RerankStageResult rerank_stage;
  std::optional<MetricReport> report;  // absent when queries are unlabeled
  std::string trajectory_log_path;
  std::string ranked_path;
  std::string report_path;
};

// Full chain: reformulation loop (or single-shot baseline) -> final rerank ->
// evaluation. Output files land in cfg.output_dir.
inline PipelineOutcome run_pipeline(Runtime& rt, const RunConfig& cfg, bool baseline = false) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  PipelineOutcome outcome;

  if (baseline) {
    outcome.pool_trajectories = run_single_shot_batch(rt, cfg, SingleShot::baseline);
    outcome.trajectory_log_path = cfg.output_dir + "/pool.jsonl";
    write_pool_log_file(outcome.pool_trajectories, outcome.trajectory_log_path, cfg.seed);
  } else {
    outcome.mas_results = run_mas_batch(rt, cfg);
    outcome.trajectory_log_path = cfg.output_dir + "/trajectories.jsonl";
    write_trajectory_log_file(outcome.mas_results, outcome.trajectory_log_path, cfg.seed);
    outcome.pool_trajectories.reserve(outcome.mas_results.size());
    for (const auto& r : outcome.mas_results) {
      outcome.pool_trajectories.push_back(r.trajectory);
    }
  }

  outcome.rerank_stage = rerank_trajectories(rt, outcome.pool_trajectories, cfg);
  outcome.ranked_path = cfg.output_dir + "/ranked.jsonl";
  write_ranked_lists(outcome.rerank_stage.rankings, outcome.ranked_path);

  bool any_labeled = false;
  for (const auto& q : rt.queries) any_labeled |= q.labeled;
  if (any_labeled) {
    MetricReport report = evaluate_against_queries(outcome.rerank_stage.rankings, rt.queries,
                                                   cfg.eval_k, cfg.mrr_miss_mode());
    outcome.report_path = cfg.output_dir + "/report.json";
    ojson j = metric_report_json(report);
    j["seed"] = cfg.seed;
    write_text_file(outcome.report_path, j.dump(2) + "\n");
    outcome.report = std::move(report);
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Rollout variability over recorded trajectory logs.

inline RolloutMatrix rollout_matrix_from_trajectories(const std::vector<Trajectory>& trajectories,
                                                      const std::vector<Query>& queries) {
  std::unordered_map<std::string, GoldSet> gold;
  for (const auto& q : queries) {
    if (q.labeled) gold[q.id] = q.gold_set();
  }
  RolloutMatrix matrix;
  std::unordered_map<std::string, size_t> row_of;
  for (const auto& t : trajectories) {
    auto git = gold.find(t.query_id);
    if (git == gold.end()) {
      throw Error(ErrorCode::empty_gold, "no gold labels for query " + t.query_id);
    }
    auto [it, inserted] = row_of.emplace(t.query_id, matrix.query_ids.size());
    if (inserted) {
      matrix.query_ids.push_back(t.query_id);
      matrix.recalls.emplace_back();
    }
    matrix.recalls[it->second].push_back(final_reward(t.pool, git->second));
  }
  if (matrix.recalls.empty()) throw Error(ErrorCode::empty_input, "no trajectories");
  matrix.rollouts = matrix.recalls.front().size();
  matrix.validate();
  return matrix;
}

}  // namespace malr
