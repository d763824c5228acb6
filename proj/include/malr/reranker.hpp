#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "malr/agents.hpp"
#include "malr/common.hpp"
#include "malr/corpus.hpp"
#include "malr/orchestrator.hpp"

namespace malr {

struct RerankCandidate {
  int index = 0;  // 0-based position in the prompt
  std::string statute_id;
  std::string title;
  std::string text;
  double score = 0.0;
};

struct RerankRequest {
  std::string query_text;
  std::vector<RerankCandidate> candidates;  // pool ordered by best_score desc, ties by id
  size_t final_k = 10;
};

struct RerankResult {
  std::vector<std::string> ranked_ids;  // min(final_k, n) unique ids from the candidates
  bool used_fallback = false;
  std::string raw_response;
};

struct RerankConfig {
  size_t final_k = 10;
  size_t candidate_text_cap = 1200;  // Unicode scalars per candidate body
  int parse_retries = 2;
  double temperature = 0.0;
  int max_tokens = 512;
};

inline std::string truncate_chars(const std::string& text, size_t cap) {
  if (utf8_length(text) <= cap) return text;
  std::string out;
  size_t count = 0;
  for (size_t i = 0; i < text.size();) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    size_t len = (c < 0x80) ? 1 : (c < 0xE0) ? 2 : (c < 0xF0) ? 3 : 4;
    if ((c & 0xC0) == 0x80) len = 1;  // stray continuation byte
    if (count + 1 > cap) break;
    out.append(text, i, len);
    ++count;
    i += len;
  }
  out += "…";
  return out;
}

// Presentation order is best_score descending with id as the tiebreak, which
// fixes the meaning of every candidate index.
inline RerankRequest build_rerank_request(const CandidatePool& pool, const Corpus& corpus,
                                          const std::string& query_text,
                                          const RerankConfig& config = {}) {
  if (pool.empty()) throw Error(ErrorCode::empty_input, "rerank on an empty candidate pool");
  std::vector<const PoolEntry*> ordered;
  ordered.reserve(pool.entries.size());
  for (const auto& e : pool.entries) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(), [](const PoolEntry* a, const PoolEntry* b) {
    if (a->best_score != b->best_score) return a->best_score > b->best_score;
    return a->statute_id < b->statute_id;
  });
  RerankRequest request;
  request.query_text = query_text;
  request.final_k = config.final_k;
  request.candidates.reserve(ordered.size());
  for (size_t i = 0; i < ordered.size(); ++i) {
    RerankCandidate c;
    c.index = static_cast<int>(i);
    c.statute_id = ordered[i]->statute_id;
    c.score = ordered[i]->best_score;
    if (const Statute* s = corpus.find(c.statute_id)) {
      c.title = s->title;
      c.text = truncate_chars(s->text, config.candidate_text_cap);
    }
    request.candidates.push_back(std::move(c));
  }
  return request;
}

inline ChatRequest build_rerank_prompt(const PromptLibrary& lib, const RerankRequest& request,
                                       const RerankConfig& config = {}) {
  if (request.candidates.empty()) {
    throw Error(ErrorCode::empty_input, "rerank prompt needs candidates");
  }
  std::ostringstream lines;
  lines.setf(std::ios::fixed);
  lines.precision(4);
  for (const auto& c : request.candidates) {
    lines << c.index << " | " << c.score << " | " << c.title << " | " << c.text << "\n";
  }
  std::string user = lib.reranker_user_template();
  auto replace_all = [](std::string& s, std::string_view from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
      s.replace(pos, from.size(), to);
      pos += to.size();
    }
  };
  size_t k = std::min(request.final_k, request.candidates.size());
  replace_all(user, "{query}", request.query_text);
  replace_all(user, "{candidates}", lines.str());
  replace_all(user, "{final_k}", std::to_string(k));

  ChatRequest req;
  req.system_prompt = lib.reranker_system();
  req.user_prompt = user;
  req.temperature = config.temperature;
  req.max_tokens = config.max_tokens;
  return req;
}

// Extracts `selected_indices` from the first JSON object (a bare JSON array
// is also accepted), drops out-of-range and duplicate indices preserving
// order, and pads with the unselected candidates in request (score) order so
// the result always has min(final_k, n) entries.
inline std::vector<int> parse_selection(const std::string& text, size_t n, size_t final_k) {
  std::optional<json> arr;
  if (auto obj = extract_first_json_object(text)) {
    if (obj->contains("selected_indices") && (*obj)["selected_indices"].is_array()) {
      arr = (*obj)["selected_indices"];
    }
  }
  if (!arr) {
    auto v = extract_first_json_value(text, /*allow_array=*/true);
    if (v && v->is_array()) arr = *v;
  }
  if (!arr) throw Error(ErrorCode::parse_error, "no selection object or array in output");

  std::vector<int> selected;
  std::unordered_set<int> seen;
  for (const auto& x : *arr) {
    if (!x.is_number_integer()) continue;
    int idx = x.get<int>();
    if (idx < 0 || static_cast<size_t>(idx) >= n) continue;
    if (seen.insert(idx).second) selected.push_back(idx);
  }
  size_t want = std::min(final_k, n);
  for (int idx = 0; selected.size() < want && idx < static_cast<int>(n); ++idx) {
    if (seen.insert(idx).second) selected.push_back(idx);
  }
  selected.resize(std::min(selected.size(), want));
  return selected;
}

// Fallback ordering needs no model: candidates in request (score) order.
inline std::vector<std::string> fallback_ranking(const RerankRequest& request) {
  std::vector<std::string> ids;
  size_t want = std::min(request.final_k, request.candidates.size());
  ids.reserve(want);
  for (size_t i = 0; i < want; ++i) ids.push_back(request.candidates[i].statute_id);
  return ids;
}

// One chat call in the happy path, retried with a format reminder on parse
// failures; any persistent failure (including a provider outage) falls back
// to score order. Only an empty pool is a hard error.
inline RerankResult rerank(const RerankRequest& request, ChatClient& client,
                           const PromptLibrary& lib, const RerankConfig& config = {}) {
  if (request.candidates.empty()) {
    throw Error(ErrorCode::empty_input, "rerank on an empty candidate pool");
  }
  RerankResult result;
  ChatRequest base = build_rerank_prompt(lib, request, config);
  ChatRequest attempt = base;
  size_t n = request.candidates.size();
  for (int round = 0; round <= config.parse_retries; ++round) {
    std::string text;
    try {
      text = client.chat(attempt);
    } catch (const Error&) {
      break;  // provider down: the fallback needs no provider
    }
    result.raw_response = text;
    try {
      std::vector<int> indices = parse_selection(text, n, request.final_k);
      result.ranked_ids.reserve(indices.size());
      for (int idx : indices) {
        result.ranked_ids.push_back(request.candidates[static_cast<size_t>(idx)].statute_id);
      }
      return result;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::parse_error) throw;
      attempt = base;
      attempt.user_prompt += kFormatReminder;
    }
  }
  result.ranked_ids = fallback_ranking(request);
  result.used_fallback = true;
  return result;
}

}  // namespace malr
