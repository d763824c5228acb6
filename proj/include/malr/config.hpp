#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "malr/agents.hpp"
#include "malr/common.hpp"
#include "malr/grpo.hpp"
#include "malr/metrics.hpp"
#include "malr/reranker.hpp"
#include "malr/retrieval.hpp"

namespace malr {

// Everything a run needs. Defaults match the documented operating point:
// top-30 dense candidates pruned to 10 per call (60 for the single-shot
// baseline), final top-10, planner temperature 0.6 and rewrite temperature
// 0.8, K=8 rollout groups in batches of G=2. Credentials are environment
// variables (MALR_CHAT_TOKEN, MALR_EMBED_TOKEN), never config fields.
struct RunConfig {
  // Data inputs.
  std::string corpus_path;
  std::string queries_path;
  std::string embeddings_path;  // JSONL or packed binary cache
  bool unlabeled = false;       // queries carry no gold field

  // Offline fixtures (scripted/replayed providers) for mock runs, and an
  // optional directory to record replay fixtures into during a run.
  std::string mock_fixtures_dir;
  std::string record_fixtures_dir;

  // Live providers.
  std::string embed_endpoint;
  std::string chat_endpoint;
  std::string chat_model = "qwen3-4b-instruct";
  std::string rerank_endpoint;
  std::string rerank_model = "qwen-max";

  RetrievalConfig retrieval;
  bool baseline_lightweight_rerank = true;

  AgentTuning tuning;
  int parse_retries = 2;
  std::string prompts_dir;  // empty = built-in templates

  RerankConfig rerank;
  RewardConfig reward;

  std::string mode = "inference";  // or "training"
  uint64_t seed = 0;
  int jobs = 1;
  size_t eval_k = 10;
  std::string mrr_mode = "paper";  // or "conventional"
  std::string output_dir = ".";
  int rollouts = 1;

  MasMode mas_mode() const {
    if (mode == "inference") return MasMode::inference;
    if (mode == "training") return MasMode::training;
    throw Error(ErrorCode::config, "mode must be 'inference' or 'training', got " + mode);
  }

  MrrMissMode mrr_miss_mode() const {
    if (mrr_mode == "paper") return MrrMissMode::rank_k_plus_one;
    if (mrr_mode == "conventional") return MrrMissMode::zero;
    throw Error(ErrorCode::config, "mrr_mode must be 'paper' or 'conventional', got " + mrr_mode);
  }

  void validate() const {
    retrieval.validate();
    reward.validate();
    (void)mas_mode();
    (void)mrr_miss_mode();
    if (tuning.planner_temperature < 0.0 || tuning.planner_temperature > 2.0 ||
        tuning.rewrite_temperature < 0.0 || tuning.rewrite_temperature > 2.0) {
      throw Error(ErrorCode::config, "temperatures must lie in [0, 2]");
    }
    if (jobs < 1) throw Error(ErrorCode::config, "jobs must be >= 1");
    if (rollouts < 1) throw Error(ErrorCode::config, "rollouts must be >= 1");
    if (parse_retries < 0) throw Error(ErrorCode::config, "parse_retries must be >= 0");
  }

  // Referenced files must exist by the time a run starts.
  void validate_files() const {
    auto check = [](const std::string& what, const std::string& path) {
      if (!path.empty() && !std::filesystem::exists(path)) {
        throw Error(ErrorCode::io, what + " not found: " + path);
      }
    };
    check("corpus file", corpus_path);
    check("query file", queries_path);
    check("embedding file", embeddings_path);
    check("prompt directory", prompts_dir);
    check("fixture directory", mock_fixtures_dir);
  }
};

namespace detail {
inline void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw Error(ErrorCode::config, "unknown config key '" + it.key() + "' in " + where);
    }
  }
}
}  // namespace detail

// Config file format: one JSON object, schema-validated at load (typos in
// key names are hard errors). Flag overrides are applied by the CLI after
// loading, so precedence is flag > file > default.
inline RunConfig load_run_config(const std::string& path) {
  json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::config, path + ": config must be a JSON object");
  }
  detail::reject_unknown_keys(
      j,
      {"corpus", "queries", "embeddings", "unlabeled", "mock_fixtures", "record_fixtures",
       "embed_endpoint", "chat", "reranker", "retrieval", "agents", "reward", "run"},
      path);

  RunConfig cfg;
  cfg.corpus_path = j.value("corpus", cfg.corpus_path);
  cfg.queries_path = j.value("queries", cfg.queries_path);
  cfg.embeddings_path = j.value("embeddings", cfg.embeddings_path);
  cfg.unlabeled = j.value("unlabeled", cfg.unlabeled);
  cfg.mock_fixtures_dir = j.value("mock_fixtures", cfg.mock_fixtures_dir);
  cfg.record_fixtures_dir = j.value("record_fixtures", cfg.record_fixtures_dir);
  cfg.embed_endpoint = j.value("embed_endpoint", cfg.embed_endpoint);

  if (j.contains("chat")) {
    const json& c = j["chat"];
    detail::reject_unknown_keys(c, {"endpoint", "model"}, "chat");
    cfg.chat_endpoint = c.value("endpoint", cfg.chat_endpoint);
    cfg.chat_model = c.value("model", cfg.chat_model);
  }
  if (j.contains("reranker")) {
    const json& r = j["reranker"];
    detail::reject_unknown_keys(
        r, {"endpoint", "model", "final_k", "text_cap", "temperature", "max_tokens"},
        "reranker");
    cfg.rerank_endpoint = r.value("endpoint", cfg.rerank_endpoint);
    cfg.rerank_model = r.value("model", cfg.rerank_model);
    cfg.rerank.final_k = r.value("final_k", cfg.rerank.final_k);
    cfg.rerank.candidate_text_cap = r.value("text_cap", cfg.rerank.candidate_text_cap);
    cfg.rerank.temperature = r.value("temperature", cfg.rerank.temperature);
    cfg.rerank.max_tokens = r.value("max_tokens", cfg.rerank.max_tokens);
  }
  if (j.contains("retrieval")) {
    const json& r = j["retrieval"];
    detail::reject_unknown_keys(r, {"dense_k", "pruned_k", "baseline_k", "baseline_lightweight"},
                                "retrieval");
    cfg.retrieval.dense_k = r.value("dense_k", cfg.retrieval.dense_k);
    cfg.retrieval.pruned_k = r.value("pruned_k", cfg.retrieval.pruned_k);
    cfg.retrieval.baseline_k = r.value("baseline_k", cfg.retrieval.baseline_k);
    cfg.baseline_lightweight_rerank = r.value("baseline_lightweight", cfg.baseline_lightweight_rerank);
  }
  if (j.contains("agents")) {
    const json& a = j["agents"];
    detail::reject_unknown_keys(a,
                                {"planner_temperature", "rewrite_temperature",
                                 "planner_max_tokens", "rewrite_max_tokens", "parse_retries",
                                 "prompts_dir"},
                                "agents");
    cfg.tuning.planner_temperature = a.value("planner_temperature", cfg.tuning.planner_temperature);
    cfg.tuning.rewrite_temperature = a.value("rewrite_temperature", cfg.tuning.rewrite_temperature);
    cfg.tuning.planner_max_tokens = a.value("planner_max_tokens", cfg.tuning.planner_max_tokens);
    cfg.tuning.rewrite_max_tokens = a.value("rewrite_max_tokens", cfg.tuning.rewrite_max_tokens);
    cfg.parse_retries = a.value("parse_retries", cfg.parse_retries);
    cfg.prompts_dir = a.value("prompts_dir", cfg.prompts_dir);
  }
  if (j.contains("reward")) {
    const json& r = j["reward"];
    detail::reject_unknown_keys(r,
                                {"step_penalty", "alpha", "fallback_penalty", "epsilon",
                                 "group_size", "groups_per_batch", "hit_reward_fraction",
                                 "penalize_skipped"},
                                "reward");
    cfg.reward.step_penalty = r.value("step_penalty", cfg.reward.step_penalty);
    cfg.reward.alpha = r.value("alpha", cfg.reward.alpha);
    cfg.reward.fallback_penalty = r.value("fallback_penalty", cfg.reward.fallback_penalty);
    cfg.reward.epsilon = r.value("epsilon", cfg.reward.epsilon);
    cfg.reward.group_size = r.value("group_size", cfg.reward.group_size);
    cfg.reward.groups_per_batch = r.value("groups_per_batch", cfg.reward.groups_per_batch);
    cfg.reward.hit_reward_fraction = r.value("hit_reward_fraction", cfg.reward.hit_reward_fraction);
    cfg.reward.penalize_skipped = r.value("penalize_skipped", cfg.reward.penalize_skipped);
  }
  if (j.contains("run")) {
    const json& r = j["run"];
    detail::reject_unknown_keys(
        r, {"mode", "seed", "jobs", "k", "mrr_mode", "output_dir", "rollouts"}, "run");
    cfg.mode = r.value("mode", cfg.mode);
    cfg.seed = r.value("seed", cfg.seed);
    cfg.jobs = r.value("jobs", cfg.jobs);
    cfg.eval_k = r.value("k", cfg.eval_k);
    cfg.mrr_mode = r.value("mrr_mode", cfg.mrr_mode);
    cfg.output_dir = r.value("output_dir", cfg.output_dir);
    cfg.rollouts = r.value("rollouts", cfg.rollouts);
  }
  cfg.validate();
  return cfg;
}

}  // namespace malr
