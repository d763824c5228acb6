#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "malr/common.hpp"

namespace malr {

// One statutory article. `text` is the article body; lengths are measured in
// Unicode scalar values (the natural unit for Chinese text).
struct Statute {
  std::string id;
  std::string title;  // may be empty
  std::string text;
};

// Immutable after load; safe to share across threads.
class Corpus {
 public:
  void add(Statute statute) {
    if (statute.id.empty()) throw Error(ErrorCode::malformed_record, "statute with empty id");
    if (statute.text.empty()) {
      throw Error(ErrorCode::malformed_record, "statute '" + statute.id + "' with empty text");
    }
    auto [it, inserted] = index_.emplace(statute.id, statutes_.size());
    if (!inserted) throw Error(ErrorCode::duplicate_id, "duplicate statute id: " + statute.id);
    statutes_.push_back(std::move(statute));
  }

  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  const Statute* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &statutes_[it->second];
  }

  const Statute& at(const std::string& id) const {
    const Statute* s = find(id);
    if (!s) throw Error(ErrorCode::malformed_record, "unknown statute id: " + id);
    return *s;
  }

  size_t size() const { return statutes_.size(); }
  bool empty() const { return statutes_.empty(); }
  const std::vector<Statute>& statutes() const { return statutes_; }

 private:
  std::vector<Statute> statutes_;
  std::unordered_map<std::string, size_t> index_;
};

// Annotated retrieval query. `labeled` is false when the gold field was
// absent (unlabeled mode); metrics over such queries are unavailable.
struct Query {
  std::string id;
  std::string text;
  std::vector<std::string> gold_ids;
  bool labeled = true;

  GoldSet gold_set() const { return GoldSet(gold_ids.begin(), gold_ids.end()); }
};

enum class LabelMode { labeled, unlabeled };

struct CorpusStats {
  size_t n_queries = 0;
  double avg_query_len = 0.0;    // Unicode scalar values
  double avg_statute_len = 0.0;  // text field only, titles excluded
  size_t corpus_size = 0;
  double avg_relevant = 0.0;  // mean |gold_ids| over labeled queries
};

// Corpus file: JSONL, one object per line with keys `id` (string),
// `title` (string, optional), `text` (string).
inline Corpus load_corpus(const std::string& path) {
  Corpus corpus;
  for_each_line(path, [&](size_t line_no, const std::string& line) {
    if (trim(line).empty()) return;
    json j = parse_json_line(path, line_no, line);
    auto where = [&] { return path + ":" + std::to_string(line_no); };
    if (!j.contains("id") || !j["id"].is_string()) {
      throw Error(ErrorCode::malformed_record, where() + ": missing string field 'id'");
    }
    if (!j.contains("text") || !j["text"].is_string()) {
      throw Error(ErrorCode::malformed_record, where() + ": missing string field 'text'");
    }
    Statute s;
    s.id = j["id"].get<std::string>();
    s.text = j["text"].get<std::string>();
    if (j.contains("title")) {
      if (!j["title"].is_string()) {
        throw Error(ErrorCode::malformed_record, where() + ": 'title' must be a string");
      }
      s.title = j["title"].get<std::string>();
    }
    try {
      corpus.add(std::move(s));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::duplicate_id) throw;
      throw Error(e.code(), where() + ": " + e.what());
    }
  });
  return corpus;
}

// Query file: JSONL with keys `id`, `text`, `gold_ids` (array of strings;
// optional in unlabeled mode). File order is preserved.
inline std::vector<Query> load_queries(const std::string& path,
                                       LabelMode mode = LabelMode::labeled) {
  std::vector<Query> queries;
  std::unordered_set<std::string> seen;
  for_each_line(path, [&](size_t line_no, const std::string& line) {
    if (trim(line).empty()) return;
    json j = parse_json_line(path, line_no, line);
    auto where = [&] { return path + ":" + std::to_string(line_no); };
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
      throw Error(ErrorCode::malformed_record, where() + ": missing string field 'id'");
    }
    if (!j.contains("text") || !j["text"].is_string() || j["text"].get<std::string>().empty()) {
      throw Error(ErrorCode::malformed_record, where() + ": missing string field 'text'");
    }
    Query q;
    q.id = j["id"].get<std::string>();
    q.text = j["text"].get<std::string>();
    if (j.contains("gold_ids")) {
      if (!j["gold_ids"].is_array()) {
        throw Error(ErrorCode::malformed_record, where() + ": 'gold_ids' must be an array");
      }
      for (const auto& g : j["gold_ids"]) {
        if (!g.is_string()) {
          throw Error(ErrorCode::malformed_record, where() + ": gold ids must be strings");
        }
        q.gold_ids.push_back(g.get<std::string>());
      }
    } else if (mode == LabelMode::labeled) {
      throw Error(ErrorCode::malformed_record,
                  where() + ": missing 'gold_ids' in labeled mode");
    } else {
      q.labeled = false;
    }
    if (!seen.insert(q.id).second) {
      throw Error(ErrorCode::duplicate_id, where() + ": duplicate query id: " + q.id);
    }
    queries.push_back(std::move(q));
  });
  return queries;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write file: " + path);
  for (const auto& s : corpus.statutes()) {
    ojson j;
    j["id"] = s.id;
    if (!s.title.empty()) j["title"] = s.title;
    j["text"] = s.text;
    out << j.dump() << "\n";
  }
}

inline void save_queries(const std::vector<Query>& queries, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write file: " + path);
  for (const auto& q : queries) {
    ojson j;
    j["id"] = q.id;
    j["text"] = q.text;
    if (q.labeled) j["gold_ids"] = q.gold_ids;
    out << j.dump() << "\n";
  }
}

// Referential-integrity report: every gold id that is absent from the corpus,
// as (query id, missing gold id) pairs in query order.
inline std::vector<std::pair<std::string, std::string>> validate(
    const std::vector<Query>& queries, const Corpus& corpus) {
  std::vector<std::pair<std::string, std::string>> report;
  for (const auto& q : queries) {
    for (const auto& g : q.gold_ids) {
      if (!corpus.contains(g)) report.emplace_back(q.id, g);
    }
  }
  return report;
}

inline CorpusStats compute_stats(const std::vector<Query>& queries, const Corpus& corpus) {
  if (queries.empty() || corpus.empty()) {
    throw Error(ErrorCode::empty_input, "stats require a non-empty corpus and query set");
  }
  CorpusStats stats;
  stats.n_queries = queries.size();
  stats.corpus_size = corpus.size();
  size_t query_chars = 0;
  for (const auto& q : queries) query_chars += utf8_length(q.text);
  stats.avg_query_len = static_cast<double>(query_chars) / static_cast<double>(queries.size());
  size_t statute_chars = 0;
  for (const auto& s : corpus.statutes()) statute_chars += utf8_length(s.text);
  stats.avg_statute_len =
      static_cast<double>(statute_chars) / static_cast<double>(corpus.size());
  size_t labeled = 0, gold_total = 0;
  for (const auto& q : queries) {
    if (!q.labeled) continue;
    ++labeled;
    gold_total += q.gold_ids.size();
  }
  if (labeled > 0) {
    stats.avg_relevant = static_cast<double>(gold_total) / static_cast<double>(labeled);
  }
  return stats;
}

}  // namespace malr
