// Command-line entry point wiring the whole pipeline: dataset statistics,
// single-shot retrieval, the planner-controlled reformulation loop, listwise
// reranking, evaluation, rollout analysis, and the desk-scale policy trainer.
//
// Exit codes: 0 success, 1 usage error, 2 data/config error, 3 provider error.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "malr/config.hpp"
#include "malr/corpus.hpp"
#include "malr/grpo.hpp"
#include "malr/pipeline.hpp"
#include "malr/simenv.hpp"
#include "malr/trajectory_log.hpp"

namespace {

using namespace malr;

// Shared --config / dataset / provider flags. Precedence: flag > file > default.
struct CommonFlags {
  std::string config_path;
  std::string corpus, queries, embeddings, fixtures, record_fixtures, output_dir, prompts_dir;
  std::string chat_endpoint, chat_model, rerank_endpoint, rerank_model, embed_endpoint;
  std::string mode, mrr_mode;
  uint64_t seed = 0;
  int jobs = 0, rollouts = 0, parse_retries = -1;
  size_t k = 0;
  bool unlabeled = false;

  void add_data_options(CLI::App* cmd, bool with_embeddings = true) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--corpus", corpus, "statute corpus JSONL");
    cmd->add_option("--queries", queries, "query JSONL");
    if (with_embeddings) {
      cmd->add_option("--embeddings", embeddings, "embedding store (JSONL or packed cache)");
    }
    cmd->add_flag("--unlabeled", unlabeled, "queries carry no gold annotations");
  }

  void add_provider_options(CLI::App* cmd) {
    cmd->add_option("--mock-fixtures", fixtures, "directory of fixture files for offline runs");
    cmd->add_option("--record-fixtures", record_fixtures,
                    "directory to record chat replay fixtures into");
    cmd->add_option("--chat-endpoint", chat_endpoint, "chat completion endpoint (loop backbone)");
    cmd->add_option("--chat-model", chat_model, "loop backbone model name");
    cmd->add_option("--rerank-endpoint", rerank_endpoint, "final reranker endpoint");
    cmd->add_option("--rerank-model", rerank_model, "final reranker model name");
    cmd->add_option("--embed-endpoint", embed_endpoint, "live embedding endpoint");
    cmd->add_option("--prompts-dir", prompts_dir, "prompt template directory");
  }

  void add_run_options(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "inference or training");
    cmd->add_option("--seed", seed, "master seed recorded in outputs");
    cmd->add_option("--jobs", jobs, "query-level parallelism");
    cmd->add_option("--rollouts", rollouts, "trajectories per query");
    cmd->add_option("--parse-retries", parse_retries, "structured-output parse retries");
    cmd->add_option("--output-dir", output_dir, "directory for output files");
    cmd->add_option("--k", k, "evaluation cutoff");
    cmd->add_option("--mrr-mode", mrr_mode, "paper (miss = 1/(K+1)) or conventional (miss = 0)");
  }

  RunConfig resolve(const CLI::App* cmd) const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    auto given = [&](const std::string& name) {
      return cmd->get_option_no_throw(name) != nullptr && cmd->count(name) > 0;
    };
    if (given("--corpus")) cfg.corpus_path = corpus;
    if (given("--queries")) cfg.queries_path = queries;
    if (given("--embeddings")) cfg.embeddings_path = embeddings;
    if (given("--unlabeled")) cfg.unlabeled = unlabeled;
    if (given("--mock-fixtures")) cfg.mock_fixtures_dir = fixtures;
    if (given("--record-fixtures")) cfg.record_fixtures_dir = record_fixtures;
    if (given("--chat-endpoint")) cfg.chat_endpoint = chat_endpoint;
    if (given("--chat-model")) cfg.chat_model = chat_model;
    if (given("--rerank-endpoint")) cfg.rerank_endpoint = rerank_endpoint;
    if (given("--rerank-model")) cfg.rerank_model = rerank_model;
    if (given("--embed-endpoint")) cfg.embed_endpoint = embed_endpoint;
    if (given("--prompts-dir")) cfg.prompts_dir = prompts_dir;
    if (given("--mode")) cfg.mode = mode;
    if (given("--seed")) cfg.seed = seed;
    if (given("--jobs")) cfg.jobs = jobs;
    if (given("--rollouts")) cfg.rollouts = rollouts;
    if (given("--parse-retries")) cfg.parse_retries = parse_retries;
    if (given("--output-dir")) cfg.output_dir = output_dir;
    if (given("--k")) {
      cfg.eval_k = k;
      cfg.rerank.final_k = k;
    }
    if (given("--mrr-mode")) cfg.mrr_mode = mrr_mode;
    cfg.validate();
    return cfg;
  }
};

void print_budget_summary(const std::vector<MasResult>& results) {
  if (results.empty()) return;
  long calls = 0, candidates = 0, pool = 0;
  for (const auto& r : results) {
    calls += r.budget.retrieval_calls;
    candidates += r.budget.embedding_candidates;
    pool += r.budget.pool_size;
  }
  double n = static_cast<double>(results.size());
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "Budget: %.2f retrieval calls/query, %.1f embedding candidates/query, "
                "%.2f pooled candidates/query\n",
                calls / n, candidates / n, pool / n);
  std::cout << buf;
}

int cmd_stats(const CommonFlags& flags, const CLI::App* cmd) {
  RunConfig cfg = flags.resolve(cmd);
  cfg.validate_files();
  if (cfg.corpus_path.empty()) throw Error(ErrorCode::io, "corpus file not found: (unset)");
  if (cfg.queries_path.empty()) throw Error(ErrorCode::io, "query file not found: (unset)");
  Corpus corpus = load_corpus(cfg.corpus_path);
  auto queries =
      load_queries(cfg.queries_path, cfg.unlabeled ? LabelMode::unlabeled : LabelMode::labeled);
  CorpusStats stats = compute_stats(queries, corpus);
  print_stats_table(std::cout, stats);
  auto missing = validate(queries, corpus);
  if (!missing.empty()) {
    std::cout << "Gold ids missing from corpus: " << missing.size() << "\n";
  }
  ojson j;
  j["n_queries"] = stats.n_queries;
  j["avg_query_len"] = stats.avg_query_len;
  j["avg_statute_len"] = stats.avg_statute_len;
  j["corpus_size"] = stats.corpus_size;
  j["avg_relevant"] = stats.avg_relevant;
  j["missing_gold_ids"] = missing.size();
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_retrieve(const CommonFlags& flags, const CLI::App* cmd, bool baseline,
                 bool no_baseline_lightweight) {
  RunConfig cfg = flags.resolve(cmd);
  if (no_baseline_lightweight) cfg.baseline_lightweight_rerank = false;
  Runtime rt = build_runtime(cfg, /*need_chat=*/false);
  auto pools = run_single_shot_batch(rt, cfg, baseline ? SingleShot::baseline : SingleShot::pruned);
  std::filesystem::create_directories(cfg.output_dir);
  std::string path = cfg.output_dir + "/pool.jsonl";
  write_pool_log_file(pools, path, cfg.seed);
  size_t total = 0;
  for (const auto& t : pools) total += t.pool.size();
  std::cout << "Retrieved pools for " << pools.size() << " queries ("
            << (baseline ? "baseline top-" + std::to_string(cfg.retrieval.baseline_k)
                         : "top-" + std::to_string(cfg.retrieval.dense_k) + " pruned to " +
                               std::to_string(cfg.retrieval.pruned_k))
            << "), avg pool " << (pools.empty() ? 0.0 : double(total) / double(pools.size()))
            << " -> " << path << "\n";
  return 0;
}

int cmd_mas_run(const CommonFlags& flags, const CLI::App* cmd) {
  RunConfig cfg = flags.resolve(cmd);
  Runtime rt = build_runtime(cfg, /*need_chat=*/true);
  auto results = run_mas_batch(rt, cfg);
  std::filesystem::create_directories(cfg.output_dir);
  std::string path = cfg.output_dir + "/trajectories.jsonl";
  write_trajectory_log_file(results, path, cfg.seed);
  std::cout << "Wrote " << results.size() << " trajectories (" << cfg.rollouts
            << " rollout(s) x " << rt.queries.size() << " queries, mode=" << cfg.mode
            << ", seed=" << cfg.seed << ") -> " << path << "\n";
  print_budget_summary(results);
  return 0;
}

int cmd_rerank(const CommonFlags& flags, const CLI::App* cmd, const std::string& trajectories) {
  RunConfig cfg = flags.resolve(cmd);
  Runtime rt = build_runtime(cfg, /*need_chat=*/true);
  auto trajs = read_trajectory_logs(trajectories);
  auto stage = rerank_trajectories(rt, trajs, cfg);
  std::filesystem::create_directories(cfg.output_dir);
  std::string path = cfg.output_dir + "/ranked.jsonl";
  write_ranked_lists(stage.rankings, path);
  std::cout << "Reranked " << stage.rankings.size() << " pools (" << stage.fallbacks
            << " fallback(s)) -> " << path << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, const CLI::App* cmd, const std::string& ranked_path) {
  RunConfig cfg = flags.resolve(cmd);
  if (cfg.queries_path.empty()) throw Error(ErrorCode::io, "query file not found: (unset)");
  cfg.validate_files();
  auto queries =
      load_queries(cfg.queries_path, cfg.unlabeled ? LabelMode::unlabeled : LabelMode::labeled);
  auto rankings = read_ranked_lists(ranked_path);
  MetricReport report =
      evaluate_against_queries(rankings, queries, cfg.eval_k, cfg.mrr_miss_mode());
  print_metric_table(std::cout, report);
  std::filesystem::create_directories(cfg.output_dir);
  std::string path = cfg.output_dir + "/report.json";
  write_text_file(path, metric_report_json(report).dump(2) + "\n");
  std::cout << "Report -> " << path << "\n";
  return 0;
}

int cmd_rollout_variability(const CommonFlags& flags, const CLI::App* cmd,
                            const std::string& trajectories) {
  RunConfig cfg = flags.resolve(cmd);
  if (cfg.queries_path.empty()) throw Error(ErrorCode::io, "query file not found: (unset)");
  cfg.validate_files();
  auto queries = load_queries(cfg.queries_path, LabelMode::labeled);
  auto trajs = read_trajectory_logs(trajectories);
  RolloutMatrix matrix = rollout_matrix_from_trajectories(trajs, queries);
  VariabilityReport var = variability(matrix);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "Rollouts per query: %zu\n", matrix.rollouts);
  std::cout << buf;
  std::snprintf(buf, sizeof(buf), "Avg max/mean/min recall: %.4f / %.4f / %.4f\n", var.avg_max,
                var.avg_mean, var.avg_min);
  std::cout << buf;
  ojson j;
  j["rollouts"] = matrix.rollouts;
  j["avg_max"] = var.avg_max;
  j["avg_mean"] = var.avg_mean;
  j["avg_min"] = var.avg_min;
  if (matrix.rollouts >= 2) {
    CategoryReport cats = categorize(matrix);
    std::cout << "Categories: stable-correct=" << cats.counts[0]
              << " occasionally-correct=" << cats.counts[1]
              << " unstable-incorrect=" << cats.counts[2]
              << " consistently-incorrect=" << cats.counts[3] << "\n";
    j["categories"] = cats.counts;
  }
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_grpo_sim(const std::string& env_path, uint64_t seed, size_t iterations, double alpha,
                 double step_penalty, double learning_rate, const std::string& output_dir) {
  SimEnv env = SimEnv::from_file(env_path);
  TrainConfig cfg;
  cfg.updates = iterations;
  cfg.learning_rate = learning_rate;
  cfg.reward.alpha = alpha;
  cfg.reward.step_penalty = step_penalty;
  cfg.reward.validate();
  TrainResult result = train_toy(env, cfg, seed);

  std::filesystem::create_directories(output_dir);
  std::string curve_path = output_dir + "/grpo_curve.csv";
  {
    std::ofstream out(curve_path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write file: " + curve_path);
    out << "# seed=" << seed << " alpha=" << alpha << " step_penalty=" << step_penalty
        << " lr=" << learning_rate << "\n";
    out << "update,mean_reward\n";
    out.setf(std::ios::fixed);
    out.precision(6);
    for (size_t i = 0; i < result.curve.size(); ++i) out << i << "," << result.curve[i] << "\n";
  }

  std::string policy_path = output_dir + "/grpo_policy.json";
  {
    ojson j;
    j["seed"] = seed;
    ojson states = ojson::array();
    for (size_t arch = 0; arch < env.archetypes().size(); ++arch) {
      for (int round = 1; round <= SimEnv::kMaxRounds; ++round) {
        for (size_t bucket = 0; bucket < SimEnv::kBuckets; ++bucket) {
          size_t sid = (arch * SimEnv::kMaxRounds + static_cast<size_t>(round - 1)) *
                           SimEnv::kBuckets + bucket;
          auto p = result.policy.probs(sid);
          ojson s;
          s["state"] = sid;
          s["archetype"] = env.archetypes()[arch].name;
          s["round"] = round;
          s["coverage_bucket"] = bucket;
          s["probs"] = std::vector<double>(p.begin(), p.end());
          states.push_back(std::move(s));
        }
      }
    }
    j["states"] = std::move(states);
    write_text_file(policy_path, j.dump(2) + "\n");
  }

  char buf[200];
  std::snprintf(buf, sizeof(buf), "Trained %zu updates (seed=%llu): mean reward %.4f -> %.4f\n",
                iterations, static_cast<unsigned long long>(seed),
                result.curve.empty() ? 0.0 : result.curve.front(),
                result.curve.empty() ? 0.0 : result.curve.back());
  std::cout << buf;
  for (size_t arch = 0; arch < env.archetypes().size(); ++arch) {
    size_t s0 = env.state_id(arch, 1, 0, env.archetypes()[arch].gold_size);
    auto p = result.policy.probs(s0);
    size_t best = 0;
    for (size_t a = 1; a < p.size(); ++a) {
      if (p[a] > p[best]) best = a;
    }
    std::snprintf(buf, sizeof(buf), "  %s: initial-round action %s (p=%.3f)\n",
                  env.archetypes()[arch].name.c_str(),
                  to_string(static_cast<PlannerAction>(best)), p[best]);
    std::cout << buf;
  }
  std::cout << "Curve -> " << curve_path << "\nPolicy -> " << policy_path << "\n";
  return 0;
}

int cmd_reward(const CommonFlags& flags, const CLI::App* cmd, const std::string& trajectories,
               bool no_normalize, const std::string& out_path) {
  RunConfig cfg = flags.resolve(cmd);
  if (cfg.queries_path.empty()) throw Error(ErrorCode::io, "query file not found: (unset)");
  cfg.validate_files();
  auto queries = load_queries(cfg.queries_path, LabelMode::labeled);
  std::unordered_map<std::string, GoldSet> gold;
  for (const auto& q : queries) gold[q.id] = q.gold_set();
  auto trajs = read_trajectory_logs(trajectories);
  auto rewards = reward_trajectories(trajs, gold, cfg.reward, !no_normalize);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write file: " + out_path);
  for (const auto& r : rewards) {
    ojson j;
    j["query_id"] = r.query_id;
    j["trajectory_id"] = r.trajectory_id;
    j["r_final"] = r.breakdown.r_final;
    j["r_hits"] = r.breakdown.r_hits;
    j["r_steps"] = r.breakdown.r_steps;
    j["fallback"] = r.breakdown.fallback;
    j["total"] = r.breakdown.total;
    if (r.advantage) j["advantage"] = *r.advantage;
    out << j.dump() << "\n";
  }
  std::cout << "Scored " << rewards.size() << " trajectories -> " << out_path << "\n";
  return 0;
}

int cmd_pipeline(const CommonFlags& flags, const CLI::App* cmd, bool baseline) {
  RunConfig cfg = flags.resolve(cmd);
  Runtime rt = build_runtime(cfg, /*need_chat=*/true);
  PipelineOutcome outcome = run_pipeline(rt, cfg, baseline);
  std::cout << (baseline ? "Baseline" : "Loop") << " pipeline over " << rt.queries.size()
            << " queries (seed=" << cfg.seed << ")\n";
  print_budget_summary(outcome.mas_results);
  if (outcome.rerank_stage.fallbacks > 0) {
    std::cout << "Reranker fallbacks: " << outcome.rerank_stage.fallbacks << "\n";
  }
  if (outcome.report) {
    print_metric_table(std::cout, *outcome.report);
  } else {
    std::cout << "Queries are unlabeled; evaluation skipped.\n";
  }
  std::cout << "Pool log -> " << outcome.trajectory_log_path << "\n";
  std::cout << "Ranked lists -> " << outcome.ranked_path << "\n";
  if (!outcome.report_path.empty()) std::cout << "Report -> " << outcome.report_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Statute retrieval: planner-driven query reformulation, dense retrieval, "
               "listwise reranking, evaluation, and a desk-scale policy trainer"};
  app.require_subcommand(1);

  CommonFlags stats_flags;
  auto* stats_cmd = app.add_subcommand("stats", "dataset statistics table");
  stats_flags.add_data_options(stats_cmd, /*with_embeddings=*/false);

  CommonFlags retrieve_flags;
  bool retrieve_baseline = false, retrieve_no_lightweight = false;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "single-shot dense retrieval");
  retrieve_flags.add_data_options(retrieve_cmd);
  retrieve_flags.add_provider_options(retrieve_cmd);
  retrieve_flags.add_run_options(retrieve_cmd);
  retrieve_cmd->add_flag("--baseline", retrieve_baseline,
                         "retrieve the fixed baseline_k candidates instead of pruning");
  retrieve_cmd->add_flag("--no-baseline-lightweight", retrieve_no_lightweight,
                         "skip the lightweight pass over baseline candidates");

  auto* mas_cmd = app.add_subcommand("mas", "reformulation loop commands");
  mas_cmd->require_subcommand(1);
  CommonFlags mas_flags;
  auto* mas_run_cmd = mas_cmd->add_subcommand("run", "run the planner-controlled loop");
  mas_flags.add_data_options(mas_run_cmd);
  mas_flags.add_provider_options(mas_run_cmd);
  mas_flags.add_run_options(mas_run_cmd);

  CommonFlags rerank_flags;
  std::string rerank_trajectories_path;
  auto* rerank_cmd = app.add_subcommand("rerank", "listwise rerank of recorded pools");
  rerank_flags.add_data_options(rerank_cmd);
  rerank_flags.add_provider_options(rerank_cmd);
  rerank_flags.add_run_options(rerank_cmd);
  rerank_cmd->add_option("--trajectories", rerank_trajectories_path, "trajectory/pool log")
      ->required();

  CommonFlags eval_flags;
  std::string eval_ranked_path;
  auto* eval_cmd = app.add_subcommand("eval", "score ranked lists against gold annotations");
  eval_flags.add_data_options(eval_cmd, /*with_embeddings=*/false);
  eval_flags.add_run_options(eval_cmd);
  eval_cmd->add_option("--ranked", eval_ranked_path, "ranked lists JSONL")->required();

  CommonFlags var_flags;
  std::string var_trajectories_path;
  auto* var_cmd = app.add_subcommand("rollout-variability",
                                     "per-query recall spread over repeated rollouts");
  var_flags.add_data_options(var_cmd, /*with_embeddings=*/false);
  var_cmd->add_option("--trajectories", var_trajectories_path, "multi-rollout trajectory log")
      ->required();

  std::string sim_env_path, sim_output_dir = ".";
  uint64_t sim_seed = 0;
  size_t sim_iterations = 200;
  double sim_alpha = 0.1, sim_step_penalty = -0.05, sim_lr = 0.1;
  auto* sim_cmd = app.add_subcommand("grpo-sim", "train the toy policy on a simulated environment");
  sim_cmd->add_option("--env", sim_env_path, "environment spec JSON")->required();
  sim_cmd->add_option("--seed", sim_seed, "master seed");
  sim_cmd->add_option("--iterations", sim_iterations, "number of updates");
  sim_cmd->add_option("--alpha", sim_alpha, "hit reward coefficient");
  sim_cmd->add_option("--step-penalty", sim_step_penalty, "per-round penalty");
  sim_cmd->add_option("--lr", sim_lr, "learning rate");
  sim_cmd->add_option("--output-dir", sim_output_dir, "directory for curve and policy files");

  CommonFlags reward_flags;
  std::string reward_trajectories_path, reward_out = "rewards.jsonl";
  bool reward_no_normalize = false;
  auto* reward_cmd = app.add_subcommand("reward", "offline reward oracle over trajectory logs");
  reward_flags.add_data_options(reward_cmd, /*with_embeddings=*/false);
  reward_cmd->add_option("--config", reward_flags.config_path, "JSON config file");
  reward_cmd->add_option("--trajectories", reward_trajectories_path, "training-mode trajectory log")
      ->required();
  reward_cmd->add_option("--out", reward_out, "output JSONL path");
  reward_cmd->add_flag("--no-normalize", reward_no_normalize, "skip group advantages");

  CommonFlags pipe_flags;
  bool pipe_baseline = false;
  auto* pipe_cmd = app.add_subcommand("pipeline", "loop -> rerank -> eval in one run");
  pipe_flags.add_data_options(pipe_cmd);
  pipe_flags.add_provider_options(pipe_cmd);
  pipe_flags.add_run_options(pipe_cmd);
  pipe_cmd->add_flag("--baseline", pipe_baseline, "single-shot baseline instead of the loop");

  try {
    app.parse(argc, argv);
    if (*stats_cmd) return cmd_stats(stats_flags, stats_cmd);
    if (*retrieve_cmd) {
      return cmd_retrieve(retrieve_flags, retrieve_cmd, retrieve_baseline,
                          retrieve_no_lightweight);
    }
    if (*mas_run_cmd) return cmd_mas_run(mas_flags, mas_run_cmd);
    if (*rerank_cmd) return cmd_rerank(rerank_flags, rerank_cmd, rerank_trajectories_path);
    if (*eval_cmd) return cmd_eval(eval_flags, eval_cmd, eval_ranked_path);
    if (*var_cmd) return cmd_rollout_variability(var_flags, var_cmd, var_trajectories_path);
    if (*sim_cmd) {
      return cmd_grpo_sim(sim_env_path, sim_seed, sim_iterations, sim_alpha, sim_step_penalty,
                          sim_lr, sim_output_dir);
    }
    if (*reward_cmd) {
      return cmd_reward(reward_flags, reward_cmd, reward_trajectories_path, reward_no_normalize,
                        reward_out);
    }
    if (*pipe_cmd) return cmd_pipeline(pipe_flags, pipe_cmd, pipe_baseline);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const malr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_provider_error() ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
