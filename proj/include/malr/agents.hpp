#pragma once

#include <array>
#include <cstdio>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "malr/common.hpp"
#include "malr/prompts.hpp"

namespace malr {

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.0;
  int max_tokens = 512;
};

// Stable key for record/replay fixtures.
inline std::string request_hash(const ChatRequest& req) {
  uint64_t h = fnv1a64(req.system_prompt);
  h = fnv1a64(req.user_prompt, h);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "|t=%.6f|m=%d", req.temperature, req.max_tokens);
  h = fnv1a64(buf, h);
  return to_hex(h);
}

enum class PlannerAction {
  single_element,
  supplementary_element,
  multi_element_decomposition,
  supportive_law,
  semantic_abnormality,
  exit,
};

inline constexpr std::array<PlannerAction, 6> kAllPlannerActions = {
    PlannerAction::single_element,        PlannerAction::supplementary_element,
    PlannerAction::multi_element_decomposition, PlannerAction::supportive_law,
    PlannerAction::semantic_abnormality,  PlannerAction::exit,
};

inline const char* to_string(PlannerAction action) {
  switch (action) {
    case PlannerAction::single_element: return "single_element";
    case PlannerAction::supplementary_element: return "supplementary_element";
    case PlannerAction::multi_element_decomposition: return "multi_element_decomposition";
    case PlannerAction::supportive_law: return "supportive_law";
    case PlannerAction::semantic_abnormality: return "semantic_abnormality";
    case PlannerAction::exit: return "exit";
  }
  return "unknown";
}

inline std::optional<PlannerAction> planner_action_from_string(std::string_view name) {
  std::string s = to_lower(trim(name));
  for (PlannerAction a : kAllPlannerActions) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

// The rewrite role a planner action activates; `exit` has none.
inline std::optional<AgentRole> role_for_action(PlannerAction action) {
  switch (action) {
    case PlannerAction::single_element: return AgentRole::single_element;
    case PlannerAction::supplementary_element: return AgentRole::supplementary_element;
    case PlannerAction::multi_element_decomposition:
      return AgentRole::multi_element_decomposition;
    case PlannerAction::supportive_law: return AgentRole::supportive_law;
    case PlannerAction::semantic_abnormality: return AgentRole::abnormality_rewriter;
    case PlannerAction::exit: return std::nullopt;
  }
  return std::nullopt;
}

struct PlannerDecision {
  PlannerAction action = PlannerAction::single_element;
  std::string reason;
};

struct RewriteOutput {
  std::vector<std::string> reformulations;  // non-empty, deduplicated, no blanks
};

struct AbnormalityDiagnosis {
  std::string anomaly_type;
  std::string explanation;
};

// What the planner sees each round. Deliberately contains only counts and
// titles; gold annotations are not reachable from this type.
struct PlannerContext {
  std::string original_query;
  int iteration = 1;  // 1-based index of the round being decided
  std::vector<std::string> actions_taken;
  std::vector<int> new_unique_counts;  // one entry per completed round
  int pool_size = 0;
  std::vector<std::string> top_titles;
  bool force_exit = false;  // final round: the planner must exit
};

struct RewriteContext {
  std::string original_query;
  std::vector<std::string> prior_rewrites;
  std::string diagnosis;  // abnormality rewriter only
};

struct AgentTuning {
  double planner_temperature = 0.6;
  double rewrite_temperature = 0.8;
  int planner_max_tokens = 512;
  int rewrite_max_tokens = 1024;
};

inline ChatRequest render_planner_prompt(const PromptLibrary& lib, const PlannerContext& ctx,
                                         const AgentTuning& tuning = {}) {
  if (trim(ctx.original_query).empty()) {
    throw Error(ErrorCode::missing_context_field, "planner context is missing the query");
  }
  if (ctx.iteration < 1) {
    throw Error(ErrorCode::missing_context_field, "planner context has no iteration index");
  }
  std::ostringstream user;
  user << "Original query: " << ctx.original_query << "\n";
  user << "Iteration: " << ctx.iteration << "\n";
  if (ctx.actions_taken.empty()) {
    user << "Actions so far: none\n";
  } else {
    user << "Actions so far:";
    for (const auto& a : ctx.actions_taken) user << " " << a;
    user << "\n";
  }
  if (ctx.new_unique_counts.empty() && ctx.pool_size == 0) {
    user << "Candidate pool: no retrieval yet\n";
  } else {
    user << "New unique candidates per round:";
    for (int c : ctx.new_unique_counts) user << " " << c;
    user << "\n";
    user << "Candidate pool size: " << ctx.pool_size << "\n";
    if (!ctx.top_titles.empty()) {
      user << "Top candidate titles:\n";
      for (const auto& t : ctx.top_titles) user << "- " << t << "\n";
    }
  }
  if (ctx.force_exit) {
    user << "This is the final round: you must choose \"exit\".\n";
  }
  ChatRequest req;
  req.system_prompt = lib.system_prompt(AgentRole::planner);
  req.user_prompt = user.str();
  req.temperature = tuning.planner_temperature;
  req.max_tokens = tuning.planner_max_tokens;
  return req;
}

inline ChatRequest render_rewrite_prompt(const PromptLibrary& lib, AgentRole role,
                                         const RewriteContext& ctx,
                                         const AgentTuning& tuning = {}) {
  if (role == AgentRole::planner) {
    throw Error(ErrorCode::config, "render_rewrite_prompt takes a rewrite role");
  }
  if (trim(ctx.original_query).empty()) {
    throw Error(ErrorCode::missing_context_field, "rewrite context is missing the query");
  }
  std::ostringstream user;
  user << "Query: " << ctx.original_query << "\n";
  if (!ctx.prior_rewrites.empty()) {
    user << "Previous reformulations:\n";
    for (const auto& r : ctx.prior_rewrites) user << "- " << r << "\n";
  }
  if (role == AgentRole::abnormality_rewriter && !ctx.diagnosis.empty()) {
    user << "Diagnosis: " << ctx.diagnosis << "\n";
  }
  ChatRequest req;
  req.system_prompt = lib.system_prompt(role);
  req.user_prompt = user.str();
  req.temperature = tuning.rewrite_temperature;
  req.max_tokens = tuning.rewrite_max_tokens;
  return req;
}

// ---------------------------------------------------------------------------
// Chat client contract and test/replay implementations. The HTTP adapter
// lives in malr/http_clients.hpp so that core code does not pull in the
// socket stack.

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
};

// Replays canned responses in FIFO order. Single-consumer: responses are
// positional, so the queue must not be shared across concurrent callers.
class ScriptedChatClient final : public ChatClient {
 public:
  ScriptedChatClient() = default;
  explicit ScriptedChatClient(std::vector<std::string> responses)
      : responses_(responses.begin(), responses.end()) {}

  void push_response(std::string response) { responses_.push_back(std::move(response)); }

  std::string chat(const ChatRequest& request) override {
    last_request_ = request;
    requests_.push_back(request);
    if (responses_.empty()) {
      throw Error(ErrorCode::provider_error, "scripted chat queue exhausted");
    }
    std::string out = std::move(responses_.front());
    responses_.pop_front();
    return out;
  }

  size_t remaining() const { return responses_.size(); }
  const std::optional<ChatRequest>& last_request() const { return last_request_; }
  const std::vector<ChatRequest>& requests() const { return requests_; }

 private:
  std::deque<std::string> responses_;
  std::optional<ChatRequest> last_request_;
  std::vector<ChatRequest> requests_;
};

// Adapts an arbitrary function; handy for request-dependent mocks.
class FunctionChatClient final : public ChatClient {
 public:
  explicit FunctionChatClient(std::function<std::string(const ChatRequest&)> fn)
      : fn_(std::move(fn)) {}

  std::string chat(const ChatRequest& request) override { return fn_(request); }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

// Fixture format shared by all record/replay tooling: JSONL of
// {"request_hash": ..., "response": ...}.
class ReplayChatClient final : public ChatClient {
 public:
  static ReplayChatClient from_file(const std::string& path) {
    ReplayChatClient client;
    for_each_line(path, [&](size_t line_no, const std::string& line) {
      if (trim(line).empty()) return;
      json j = parse_json_line(path, line_no, line);
      if (!j.contains("request_hash") || !j.contains("response")) {
        throw Error(ErrorCode::malformed_record,
                    path + ":" + std::to_string(line_no) + ": expected {request_hash, response}");
      }
      client.responses_[j["request_hash"].get<std::string>()] =
          j["response"].get<std::string>();
    });
    return client;
  }

  void put(const std::string& hash, std::string response) {
    responses_[hash] = std::move(response);
  }

  std::string chat(const ChatRequest& request) override {
    std::string h = request_hash(request);
    auto it = responses_.find(h);
    if (it == responses_.end()) {
      throw Error(ErrorCode::provider_unavailable,
                  "no recorded response for request hash " + h);
    }
    return it->second;
  }

  size_t size() const { return responses_.size(); }

 private:
  std::unordered_map<std::string, std::string> responses_;
};

// Wraps a live client and writes every new (hash, response) pair to a
// fixture file that ReplayChatClient can load. The file is truncated on
// construction so one recorder produces one coherent fixture.
class RecordingChatClient final : public ChatClient {
 public:
  RecordingChatClient(ChatClient& inner, const std::string& fixture_path)
      : inner_(inner), out_(fixture_path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(ErrorCode::io, "cannot write fixture: " + fixture_path);
  }

  std::string chat(const ChatRequest& request) override {
    std::string response = inner_.chat(request);
    std::string h = request_hash(request);
    std::lock_guard<std::mutex> lock(mutex_);
    if (seen_.insert(h).second) {
      ojson j;
      j["request_hash"] = h;
      j["response"] = response;
      out_ << j.dump() << "\n";
      out_.flush();
    }
    return response;
  }

 private:
  ChatClient& inner_;
  std::ofstream out_;
  std::unordered_set<std::string> seen_;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Structured-output parsing.

inline PlannerDecision parse_planner_decision(const std::string& text) {
  auto obj = extract_first_json_object(text);
  if (!obj) throw Error(ErrorCode::parse_error, "no JSON object in planner output");
  const json& j = *obj;
  if (!j.contains("action") || !j["action"].is_string()) {
    throw Error(ErrorCode::parse_error, "planner output has no 'action' string");
  }
  auto action = planner_action_from_string(j["action"].get<std::string>());
  if (!action) {
    throw Error(ErrorCode::parse_error,
                "unknown action: " + j["action"].get<std::string>());
  }
  PlannerDecision decision;
  decision.action = *action;
  if (j.contains("reason") && j["reason"].is_string()) {
    decision.reason = trim(j["reason"].get<std::string>());
  }
  if (decision.reason.empty()) {
    throw Error(ErrorCode::parse_error, "planner output has no non-empty 'reason'");
  }
  return decision;
}

inline std::string serialize_planner_decision(const PlannerDecision& decision) {
  ojson j;
  j["action"] = to_string(decision.action);
  j["reason"] = decision.reason;
  return j.dump();
}

// Accepts a bare string (single-rewrite roles) or {"queries": [...]}; also
// tolerates {"query": "..."} from terse models. Whitespace is stripped,
// exact duplicates removed, empty strings rejected. All roles except the
// decomposition agent must yield exactly one reformulation.
inline RewriteOutput parse_rewrites(const std::string& text, AgentRole role) {
  if (role == AgentRole::planner || role == AgentRole::abnormality_analyzer) {
    throw Error(ErrorCode::config, "parse_rewrites takes a rewrite role");
  }
  std::string trimmed = trim(text);
  if (trimmed.empty()) throw Error(ErrorCode::empty_rewrite, "rewrite output is empty");

  std::vector<std::string> raw;
  if (auto obj = extract_first_json_object(text)) {
    const json& j = *obj;
    if (j.contains("queries")) {
      if (!j["queries"].is_array()) {
        throw Error(ErrorCode::parse_error, "'queries' must be an array");
      }
      for (const auto& q : j["queries"]) {
        if (!q.is_string()) throw Error(ErrorCode::parse_error, "'queries' entries must be strings");
        raw.push_back(q.get<std::string>());
      }
    } else if (j.contains("query") && j["query"].is_string()) {
      raw.push_back(j["query"].get<std::string>());
    } else {
      throw Error(ErrorCode::parse_error, "rewrite object has no 'queries' field");
    }
  } else {
    raw.push_back(trimmed);
  }

  RewriteOutput out;
  std::unordered_set<std::string> seen;
  for (auto& r : raw) {
    std::string s = trim(r);
    if (s.empty()) continue;
    if (seen.insert(s).second) out.reformulations.push_back(std::move(s));
  }
  if (out.reformulations.empty()) {
    throw Error(ErrorCode::empty_rewrite, "rewrite output contains no usable text");
  }
  if (role != AgentRole::multi_element_decomposition && out.reformulations.size() != 1) {
    throw Error(ErrorCode::parse_error,
                std::string("cardinality: role ") + to_string(role) + " must yield exactly one "
                "reformulation, got " + std::to_string(out.reformulations.size()));
  }
  return out;
}

inline AbnormalityDiagnosis parse_abnormality_diagnosis(const std::string& text) {
  auto obj = extract_first_json_object(text);
  if (!obj) throw Error(ErrorCode::parse_error, "no JSON object in diagnosis output");
  const json& j = *obj;
  AbnormalityDiagnosis d;
  if (j.contains("type") && j["type"].is_string()) {
    d.anomaly_type = trim(j["type"].get<std::string>());
  } else if (j.contains("anomaly_type") && j["anomaly_type"].is_string()) {
    d.anomaly_type = trim(j["anomaly_type"].get<std::string>());
  }
  if (j.contains("explanation") && j["explanation"].is_string()) {
    d.explanation = trim(j["explanation"].get<std::string>());
  }
  if (d.anomaly_type.empty() || d.explanation.empty()) {
    throw Error(ErrorCode::parse_error, "diagnosis needs non-empty type and explanation");
  }
  return d;
}

inline constexpr const char* kFormatReminder =
    "\n\nReminder: reply with exactly one compact JSON object in the requested format and "
    "nothing else.";

// Calls the model, parses, and retries with an appended format reminder on
// parse failures. Provider errors propagate immediately; after the retry
// budget the last parse error is rethrown for the caller's fallback rule.
template <typename T>
T chat_and_parse(ChatClient& client, const ChatRequest& request,
                 const std::function<T(const std::string&)>& parse, int parse_retries) {
  ChatRequest attempt = request;
  for (int round = 0; ; ++round) {
    std::string text = client.chat(attempt);
    try {
      return parse(text);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::parse_error && e.code() != ErrorCode::empty_rewrite) throw;
      if (round >= parse_retries) throw;
      attempt = request;
      attempt.user_prompt += kFormatReminder;
    }
  }
}

// Analyzer -> rewriter chain behind the planner's semantic_abnormality
// action. Analyzer failures (after retries) degrade to a rewrite with an
// empty diagnosis; rewriter failures propagate as the skip-iteration signal.
inline RewriteOutput run_semantic_abnormality(ChatClient& client, const PromptLibrary& lib,
                                              const std::string& query,
                                              const std::vector<std::string>& prior_rewrites,
                                              int parse_retries,
                                              const AgentTuning& tuning = {}) {
  RewriteContext ctx;
  ctx.original_query = query;
  ctx.prior_rewrites = prior_rewrites;

  std::string diagnosis;
  try {
    ChatRequest analyzer_req = render_rewrite_prompt(lib, AgentRole::abnormality_analyzer, ctx, tuning);
    AbnormalityDiagnosis d = chat_and_parse<AbnormalityDiagnosis>(
        client, analyzer_req,
        [](const std::string& t) { return parse_abnormality_diagnosis(t); }, parse_retries);
    diagnosis = d.anomaly_type + ": " + d.explanation;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::parse_error && e.code() != ErrorCode::empty_rewrite) throw;
    diagnosis.clear();  // analyzer gave up; rewrite without a diagnosis
  }

  ctx.diagnosis = diagnosis;
  ChatRequest rewriter_req = render_rewrite_prompt(lib, AgentRole::abnormality_rewriter, ctx, tuning);
  return chat_and_parse<RewriteOutput>(
      client, rewriter_req,
      [](const std::string& t) { return parse_rewrites(t, AgentRole::abnormality_rewriter); },
      parse_retries);
}

}  // namespace malr
