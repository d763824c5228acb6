#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include "httplib.h"
#include "malr/agents.hpp"
#include "malr/common.hpp"
#include "malr/retrieval.hpp"

namespace malr {

// Splits "http://host:port/some/path" into the client base and the request
// path; an endpoint without a path gets `default_path`.
inline std::pair<std::string, std::string> split_endpoint(const std::string& url,
                                                          const std::string& default_path) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::config, "endpoint must include a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, default_path};
  std::string path = url.substr(path_start);
  return {url.substr(0, path_start), path.empty() || path == "/" ? default_path : path};
}

inline ojson build_chat_body(const std::string& model, const ChatRequest& req) {
  ojson body;
  body["model"] = model;
  ojson messages = ojson::array();
  ojson system;
  system["role"] = "system";
  system["content"] = req.system_prompt;
  ojson user;
  user["role"] = "user";
  user["content"] = req.user_prompt;
  messages.push_back(std::move(system));
  messages.push_back(std::move(user));
  body["messages"] = std::move(messages);
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_tokens;
  return body;
}

inline std::string extract_chat_content(const json& response) {
  if (!response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    throw Error(ErrorCode::provider_error, "chat response has no choices");
  }
  const json& first = response["choices"][0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw Error(ErrorCode::provider_error, "chat response has no message content");
  }
  return first["message"]["content"].get<std::string>();
}

struct HttpRetryPolicy {
  int retries = 2;               // additional attempts after the first
  int backoff_ms = 200;          // multiplied by the attempt index
  int timeout_seconds = 60;
};

// OpenAI-compatible chat adapter. Credentials come from the environment
// (MALR_CHAT_TOKEN), never from config files.
class HttpChatClient final : public ChatClient {
 public:
  HttpChatClient(const std::string& endpoint, std::string model,
                 HttpRetryPolicy policy = {})
      : model_(std::move(model)), policy_(policy) {
    std::tie(base_, path_) = split_endpoint(endpoint, "/v1/chat/completions");
    if (const char* token = std::getenv("MALR_CHAT_TOKEN")) token_ = token;
  }

  std::string chat(const ChatRequest& request) override {
    std::string body = build_chat_body(model_, request).dump();
    int last_status = 0;
    for (int attempt = 0; attempt <= policy_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(policy_.backoff_ms * attempt));
      }
      httplib::Client cli(base_);
      cli.set_connection_timeout(policy_.timeout_seconds);
      cli.set_read_timeout(policy_.timeout_seconds);
      httplib::Headers headers;
      if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
      auto res = cli.Post(path_, headers, body, "application/json");
      if (!res) {
        last_status = 0;
        continue;  // transport failure, retry
      }
      if (res->status == 200) {
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded()) {
          throw Error(ErrorCode::provider_error, "chat response is not JSON");
        }
        return extract_chat_content(j);
      }
      last_status = res->status;
      if (res->status < 500) break;  // client errors will not heal on retry
    }
    if (last_status == 0) {
      throw Error(ErrorCode::timeout, "chat provider unreachable: " + base_);
    }
    throw Error(ErrorCode::provider_error,
                "chat provider returned HTTP " + std::to_string(last_status));
  }

 private:
  std::string base_;
  std::string path_;
  std::string model_;
  std::string token_;
  HttpRetryPolicy policy_;
};

// Live embedding adapter sharing the provider contract with the precomputed
// table: POST {"input": text} -> {"embedding": [..]}. Token comes from
// MALR_EMBED_TOKEN.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(const std::string& endpoint, HttpRetryPolicy policy = {})
      : policy_(policy) {
    std::tie(base_, path_) = split_endpoint(endpoint, "/embed");
    if (const char* token = std::getenv("MALR_EMBED_TOKEN")) token_ = token;
  }

  EmbeddingVector embed(const std::string& text) override {
    if (text.empty()) throw Error(ErrorCode::empty_input, "cannot embed empty text");
    ojson body;
    body["input"] = text;
    std::string payload = body.dump();
    for (int attempt = 0; attempt <= policy_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(policy_.backoff_ms * attempt));
      }
      httplib::Client cli(base_);
      cli.set_connection_timeout(policy_.timeout_seconds);
      cli.set_read_timeout(policy_.timeout_seconds);
      httplib::Headers headers;
      if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
      auto res = cli.Post(path_, headers, payload, "application/json");
      if (!res) continue;
      if (res->status == 200) {
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.contains("embedding") || !j["embedding"].is_array()) {
          throw Error(ErrorCode::provider_error, "embedding response lacks 'embedding' array");
        }
        EmbeddingVector v;
        v.reserve(j["embedding"].size());
        for (const auto& x : j["embedding"]) v.push_back(static_cast<float>(x.get<double>()));
        if (dim_ == 0) dim_ = v.size();
        if (v.size() != dim_) {
          throw Error(ErrorCode::dimension_mismatch, "embedding provider changed dimension");
        }
        normalize_vector(v);
        return v;
      }
      if (res->status < 500) {
        throw Error(ErrorCode::provider_error,
                    "embedding provider returned HTTP " + std::to_string(res->status));
      }
    }
    throw Error(ErrorCode::timeout, "embedding provider unreachable: " + base_);
  }

  size_t dim() const override { return dim_; }

 private:
  std::string base_;
  std::string path_;
  std::string token_;
  size_t dim_ = 0;
  HttpRetryPolicy policy_;
};

}  // namespace malr
