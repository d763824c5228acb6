#pragma once

#include <array>
#include <string>
#include <unordered_map>

#include "malr/common.hpp"

namespace malr {

// Every agent shares one backbone model; the system prompt is the only
// source of differentiation between roles.
enum class AgentRole {
  planner,
  single_element,
  supplementary_element,
  multi_element_decomposition,
  supportive_law,
  abnormality_analyzer,
  abnormality_rewriter,
};

inline const char* to_string(AgentRole role) {
  switch (role) {
    case AgentRole::planner: return "planner";
    case AgentRole::single_element: return "single_element";
    case AgentRole::supplementary_element: return "supplementary_element";
    case AgentRole::multi_element_decomposition: return "multi_element_decomposition";
    case AgentRole::supportive_law: return "supportive_law";
    case AgentRole::abnormality_analyzer: return "abnormality_analyzer";
    case AgentRole::abnormality_rewriter: return "abnormality_rewriter";
  }
  return "unknown";
}

namespace prompt_text {

inline constexpr const char* kVersion = "v1";

inline constexpr const char* kPlanner =
    R"(You control an iterative statute-retrieval loop. Each round you receive the original user query, the actions taken so far, how many new unique candidate statutes each round added, and the titles of the current top candidates.

Choose the single next action from this fixed set:
- "single_element": restate the query in precise legal terminology.
- "supplementary_element": make implicit but legally decisive factual or normative conditions explicit.
- "multi_element_decomposition": split a query bundling several legal issues into focused sub-queries.
- "supportive_law": target interpretive, procedural, or auxiliary provisions that back the core statutes.
- "semantic_abnormality": diagnose and repair a semantically inconsistent query.
- "exit": stop the loop when further reformulations are unlikely to add coverage.

Favour another round while candidate growth is strong or legal elements remain uncovered; choose "exit" once coverage looks complete. Never choose "exit" before any retrieval has happened.

Reply with one compact JSON object and nothing else:
{"action": "<one of the six>", "reason": "<one short sentence>"}
)";

inline constexpr const char* kSingleElement =
    R"(Rewrite the user's legal question into precise statutory terminology while preserving its meaning. Clarify colloquial or loosely structured wording and sharpen legal term specificity. Produce exactly one reformulation suited to statute retrieval.

Reply with one compact JSON object and nothing else:
{"queries": ["<reformulation>"]}
)";

inline constexpr const char* kSupplementaryElement =
    R"(Rewrite the user's legal question so that implicit but legally decisive conditions become explicit: thresholds, actor identities, behavioural requirements, obligations, and contextual qualifiers that statutes hinge on. Produce exactly one targeted reformulation.

Reply with one compact JSON object and nothing else:
{"queries": ["<reformulation>"]}
)";

inline constexpr const char* kMultiElementDecomposition =
    R"(The user's question may bundle several legal elements, subjects, or doctrinal components. Decompose it into focused sub-queries that can each be retrieved independently. Emit several sub-queries when the structure warrants it, each addressing one distinct legal element.

Reply with one compact JSON object and nothing else:
{"queries": ["<sub-query 1>", "<sub-query 2>"]}
)";

inline constexpr const char* kSupportiveLaw =
    R"(Rewrite the user's legal question to target interpretive, procedural, or auxiliary provisions that support the core substantive statutes. Keep the original meaning while widening the doctrinal context. Produce exactly one reformulation.

Reply with one compact JSON object and nothing else:
{"queries": ["<reformulation>"]}
)";

inline constexpr const char* kAbnormalityAnalyzer =
    R"(Examine the user's legal question for semantic anomalies such as domain overlap, latent principles, vitiated intent, or procedural dependencies. Classify the anomaly and explain it briefly.

Reply with one compact JSON object and nothing else:
{"type": "<anomaly type>", "explanation": "<short explanation>"}
)";

inline constexpr const char* kAbnormalityRewriter =
    R"(Rewrite a semantically anomalous legal question into a legally coherent form suitable for statute retrieval, guided by the diagnosis provided. Retain the original legal meaning while clarifying domain, logic, and doctrinal direction. Produce exactly one repaired reformulation.

Reply with one compact JSON object and nothing else:
{"queries": ["<repaired query>"]}
)";

inline constexpr const char* kRerankerSystem =
    R"(You are a legal expert ranking candidate statutes against a user's question. Weigh statutory applicability, factual alignment with the question, conditional and exception structures, and doctrinal coherence. The numeric relevance scores supplied with the candidates are advisory: consider them, but do not follow them mechanically. Do not explain your reasoning and do not output any rationale text.

Reply with one compact JSON object and nothing else:
{"selected_indices": [<candidate index>, ...]}
listing the chosen candidate indices, most applicable first.
)";

// Placeholders: {query}, {candidates}, {final_k}.
inline constexpr const char* kRerankerUser =
    R"(Question: {query}

Candidate statutes, one per line as "index | score | title | text":
{candidates}

Work through each candidate in stages: interpret what its score suggests, analyse its legal applicability to the question, balance score-based and law-based relevance, then select the {final_k} most applicable candidates and check that together they cover the question.

Reply with one compact JSON object and nothing else:
{"selected_indices": [<candidate index>, ...]}
)";

}  // namespace prompt_text

// System prompts for every agent role plus the final reranker. Defaults are
// compiled in; `from_dir` loads the same set from editable template files
// (one `<name>.txt` per prompt). A test pins the shipped files to the
// built-in text so the two cannot drift.
class PromptLibrary {
 public:
  static PromptLibrary builtin() {
    PromptLibrary lib;
    lib.version_ = prompt_text::kVersion;
    lib.role_prompts_[AgentRole::planner] = prompt_text::kPlanner;
    lib.role_prompts_[AgentRole::single_element] = prompt_text::kSingleElement;
    lib.role_prompts_[AgentRole::supplementary_element] = prompt_text::kSupplementaryElement;
    lib.role_prompts_[AgentRole::multi_element_decomposition] =
        prompt_text::kMultiElementDecomposition;
    lib.role_prompts_[AgentRole::supportive_law] = prompt_text::kSupportiveLaw;
    lib.role_prompts_[AgentRole::abnormality_analyzer] = prompt_text::kAbnormalityAnalyzer;
    lib.role_prompts_[AgentRole::abnormality_rewriter] = prompt_text::kAbnormalityRewriter;
    lib.reranker_system_ = prompt_text::kRerankerSystem;
    lib.reranker_user_ = prompt_text::kRerankerUser;
    return lib;
  }

  static PromptLibrary from_dir(const std::string& dir) {
    PromptLibrary lib;
    auto read = [&](const char* name) { return read_text_file(dir + "/" + name + ".txt"); };
    lib.version_ = trim(read("version"));
    if (lib.version_.empty()) {
      throw Error(ErrorCode::config, "prompt dir " + dir + " has an empty version.txt");
    }
    lib.role_prompts_[AgentRole::planner] = read("planner");
    lib.role_prompts_[AgentRole::single_element] = read("single_element");
    lib.role_prompts_[AgentRole::supplementary_element] = read("supplementary_element");
    lib.role_prompts_[AgentRole::multi_element_decomposition] =
        read("multi_element_decomposition");
    lib.role_prompts_[AgentRole::supportive_law] = read("supportive_law");
    lib.role_prompts_[AgentRole::abnormality_analyzer] = read("abnormality_analyzer");
    lib.role_prompts_[AgentRole::abnormality_rewriter] = read("abnormality_rewriter");
    lib.reranker_system_ = read("reranker_system");
    lib.reranker_user_ = read("reranker_user");
    return lib;
  }

  const std::string& system_prompt(AgentRole role) const {
    auto it = role_prompts_.find(role);
    if (it == role_prompts_.end() || it->second.empty()) {
      throw Error(ErrorCode::config,
                  std::string("no system prompt for role ") + to_string(role));
    }
    return it->second;
  }

  const std::string& reranker_system() const { return reranker_system_; }
  const std::string& reranker_user_template() const { return reranker_user_; }
  const std::string& version() const { return version_; }

  bool operator==(const PromptLibrary& other) const {
    return version_ == other.version_ && role_prompts_ == other.role_prompts_ &&
           reranker_system_ == other.reranker_system_ && reranker_user_ == other.reranker_user_;
  }

 private:
  std::unordered_map<AgentRole, std::string> role_prompts_;
  std::string reranker_system_;
  std::string reranker_user_;
  std::string version_;
};

}  // namespace malr
