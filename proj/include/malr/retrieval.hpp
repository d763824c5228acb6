#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "malr/common.hpp"
#include "malr/corpus.hpp"

namespace malr {

using EmbeddingVector = std::vector<float>;

inline double vector_norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

inline void normalize_vector(EmbeddingVector& v) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::malformed_record, "embedding contains a non-finite entry");
    }
  }
  double n = vector_norm(v);
  if (n < 1e-12) {
    throw Error(ErrorCode::malformed_record, "embedding has (near-)zero norm");
  }
  for (auto& x : v) x = static_cast<float>(static_cast<double>(x) / n);
}

// Raw file contents of an embedding set, before normalization. The JSONL
// layout (`{"id":..., "vec":[f32...]}` per line) is authoritative; the packed
// binary cache converts to and from it exactly.
struct RawEmbeddingFile {
  uint32_t dim = 0;
  std::vector<std::pair<std::string, EmbeddingVector>> rows;
};

inline constexpr char kEmbeddingMagic[9] = {'M', 'A', 'L', 'R', '-', 'E', 'M', 'B', '\0'};

inline RawEmbeddingFile load_embeddings_jsonl(const std::string& path) {
  RawEmbeddingFile file;
  for_each_line(path, [&](size_t line_no, const std::string& line) {
    if (trim(line).empty()) return;
    json j = parse_json_line(path, line_no, line);
    auto where = [&] { return path + ":" + std::to_string(line_no); };
    if (!j.contains("id") || !j["id"].is_string()) {
      throw Error(ErrorCode::malformed_record, where() + ": missing string field 'id'");
    }
    if (!j.contains("vec") || !j["vec"].is_array() || j["vec"].empty()) {
      throw Error(ErrorCode::malformed_record, where() + ": missing non-empty array 'vec'");
    }
    EmbeddingVector vec;
    vec.reserve(j["vec"].size());
    for (const auto& x : j["vec"]) {
      if (!x.is_number()) {
        throw Error(ErrorCode::malformed_record, where() + ": 'vec' entries must be numbers");
      }
      vec.push_back(static_cast<float>(x.get<double>()));
    }
    if (file.dim == 0) {
      file.dim = static_cast<uint32_t>(vec.size());
    } else if (vec.size() != file.dim) {
      throw Error(ErrorCode::dimension_mismatch,
                  where() + ": expected dim " + std::to_string(file.dim) + ", got " +
                      std::to_string(vec.size()));
    }
    file.rows.emplace_back(j["id"].get<std::string>(), std::move(vec));
  });
  return file;
}

inline void save_embeddings_jsonl(const RawEmbeddingFile& file, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write file: " + path);
  for (const auto& [id, vec] : file.rows) {
    ojson j;
    j["id"] = id;
    ojson arr = ojson::array();
    for (float x : vec) arr.push_back(x);
    j["vec"] = std::move(arr);
    out << j.dump() << "\n";
  }
}

namespace detail {
inline void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline uint32_t get_u32le(const std::string& data, size_t& pos, const std::string& path) {
  if (pos + 4 > data.size()) throw Error(ErrorCode::malformed_record, path + ": truncated");
  uint32_t v = static_cast<uint8_t>(data[pos]) |
               (static_cast<uint32_t>(static_cast<uint8_t>(data[pos + 1])) << 8) |
               (static_cast<uint32_t>(static_cast<uint8_t>(data[pos + 2])) << 16) |
               (static_cast<uint32_t>(static_cast<uint8_t>(data[pos + 3])) << 24);
  pos += 4;
  return v;
}
}  // namespace detail

// Packed cache layout: 9-byte magic "MALR-EMB\0", dim (u32 LE), row count
// (u32 LE), id table (per id: byte length u32 LE + raw bytes), then
// count*dim float32 LE values in row-major order.
inline void save_embeddings_binary(const RawEmbeddingFile& file, const std::string& path) {
  std::string out;
  out.append(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  detail::put_u32le(out, file.dim);
  detail::put_u32le(out, static_cast<uint32_t>(file.rows.size()));
  for (const auto& [id, vec] : file.rows) {
    detail::put_u32le(out, static_cast<uint32_t>(id.size()));
    out.append(id);
    (void)vec;
  }
  for (const auto& [id, vec] : file.rows) {
    for (float x : vec) {
      uint32_t bits;
      std::memcpy(&bits, &x, sizeof(bits));
      detail::put_u32le(out, bits);
    }
  }
  write_text_file(path, out);
}

inline RawEmbeddingFile load_embeddings_binary(const std::string& path) {
  std::string data = read_text_file(path);
  if (data.size() < sizeof(kEmbeddingMagic) ||
      std::memcmp(data.data(), kEmbeddingMagic, sizeof(kEmbeddingMagic)) != 0) {
    throw Error(ErrorCode::malformed_record, path + ": bad embedding cache magic");
  }
  size_t pos = sizeof(kEmbeddingMagic);
  RawEmbeddingFile file;
  file.dim = detail::get_u32le(data, pos, path);
  uint32_t count = detail::get_u32le(data, pos, path);
  std::vector<std::string> ids;
  ids.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t len = detail::get_u32le(data, pos, path);
    if (pos + len > data.size()) throw Error(ErrorCode::malformed_record, path + ": truncated");
    ids.emplace_back(data.substr(pos, len));
    pos += len;
  }
  file.rows.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    EmbeddingVector vec(file.dim);
    for (uint32_t d = 0; d < file.dim; ++d) {
      uint32_t bits = detail::get_u32le(data, pos, path);
      float x;
      std::memcpy(&x, &bits, sizeof(x));
      vec[d] = x;
    }
    file.rows.emplace_back(std::move(ids[i]), std::move(vec));
  }
  if (pos != data.size()) {
    throw Error(ErrorCode::malformed_record, path + ": trailing bytes in embedding cache");
  }
  return file;
}

inline bool is_binary_embedding_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open file: " + path);
  char magic[sizeof(kEmbeddingMagic)] = {};
  in.read(magic, sizeof(magic));
  return in.gcount() == static_cast<std::streamsize>(sizeof(magic)) &&
         std::memcmp(magic, kEmbeddingMagic, sizeof(magic)) == 0;
}

// Statute id -> unit-normalized vector. Immutable after load.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  static EmbeddingStore from_raw(const RawEmbeddingFile& file) {
    EmbeddingStore store;
    store.dim_ = file.dim;
    store.data_.reserve(static_cast<size_t>(file.rows.size()) * file.dim);
    for (const auto& [id, vec] : file.rows) {
      auto [it, inserted] = store.index_.emplace(id, store.ids_.size());
      if (!inserted) throw Error(ErrorCode::duplicate_id, "duplicate embedding id: " + id);
      store.ids_.push_back(id);
      EmbeddingVector normalized = vec;
      try {
        normalize_vector(normalized);
      } catch (const Error& e) {
        throw Error(e.code(), "embedding for '" + id + "': " + e.what());
      }
      store.data_.insert(store.data_.end(), normalized.begin(), normalized.end());
    }
    return store;
  }

  static EmbeddingStore load(const std::string& path) {
    return from_raw(is_binary_embedding_file(path) ? load_embeddings_binary(path)
                                                   : load_embeddings_jsonl(path));
  }

  size_t dim() const { return dim_; }
  size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }

  const float* row(size_t i) const { return data_.data() + i * dim_; }

  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  EmbeddingVector vector_for(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorCode::malformed_record, "unknown embedding id: " + id);
    const float* r = row(it->second);
    return EmbeddingVector(r, r + dim_);
  }

  // Every stored id must exist in the corpus.
  void check_against(const Corpus& corpus) const {
    for (const auto& id : ids_) {
      if (!corpus.contains(id)) {
        throw Error(ErrorCode::malformed_record,
                    "embedding id not present in corpus: " + id);
      }
    }
  }

 private:
  std::vector<std::string> ids_;
  std::vector<float> data_;
  size_t dim_ = 0;
  std::unordered_map<std::string, size_t> index_;
};

struct RetrievalHit {
  std::string statute_id;
  double similarity = 0.0;  // cosine of unit vectors, clamped to [-1, 1]
  double score = 0.0;       // current ranking score; dense similarity until rescored
  int rank = 0;             // 1-based
};

struct RetrievalConfig {
  size_t dense_k = 30;
  size_t pruned_k = 10;
  size_t baseline_k = 60;

  void validate() const {
    if (dense_k < 1 || pruned_k < 1 || baseline_k < 1) {
      throw Error(ErrorCode::config, "retrieval k values must be >= 1");
    }
    if (pruned_k > dense_k) {
      throw Error(ErrorCode::config, "pruned_k must not exceed dense_k");
    }
  }
};

// Exact brute-force top-k by dot product of unit vectors. Ties break by
// ascending statute id so rankings are reproducible.
inline std::vector<RetrievalHit> dense_topk(const EmbeddingStore& store,
                                            const EmbeddingVector& query_vec, size_t k) {
  if (store.empty()) throw Error(ErrorCode::empty_input, "dense_topk on empty store");
  if (k < 1) throw Error(ErrorCode::config, "dense_topk requires k >= 1");
  if (query_vec.size() != store.dim()) {
    throw Error(ErrorCode::dimension_mismatch,
                "query dim " + std::to_string(query_vec.size()) + " != store dim " +
                    std::to_string(store.dim()));
  }
  size_t n = store.size();
  std::vector<double> sims(n);
  for (size_t i = 0; i < n; ++i) {
    const float* r = store.row(i);
    double dot = 0.0;
    for (size_t d = 0; d < query_vec.size(); ++d) {
      dot += static_cast<double>(r[d]) * static_cast<double>(query_vec[d]);
    }
    sims[i] = dot;
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  size_t take = std::min(k, n);
  auto better = [&](size_t a, size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return store.ids()[a] < store.ids()[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                    order.end(), better);
  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (size_t i = 0; i < take; ++i) {
    RetrievalHit h;
    h.statute_id = store.ids()[order[i]];
    h.similarity = std::clamp(sims[order[i]], -1.0, 1.0);
    h.score = h.similarity;
    h.rank = static_cast<int>(i + 1);
    hits.push_back(std::move(h));
  }
  return hits;
}

// Scorer contract for the intra-loop pruning stage. Implementations return
// one score per hit, higher is better.
class LightweightScorer {
 public:
  virtual ~LightweightScorer() = default;
  virtual std::vector<double> score(const std::string& query_text,
                                    const std::vector<RetrievalHit>& hits) = 0;
};

// Keeps the dense order; lets the pipeline run without any external model.
class PassThroughScorer final : public LightweightScorer {
 public:
  std::vector<double> score(const std::string&, const std::vector<RetrievalHit>& hits) override {
    std::vector<double> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(h.score);
    return out;
  }
};

// Re-scores and truncates to k. A scorer failure falls back to pass-through
// with a warning on the given stream. The sort is stable, so equal scores
// keep the incoming dense order.
inline std::vector<RetrievalHit> lightweight_rerank(const std::string& query_text,
                                                    const std::vector<RetrievalHit>& hits,
                                                    size_t k,
                                                    LightweightScorer* scorer = nullptr,
                                                    std::ostream* warn = &std::cerr) {
  std::vector<RetrievalHit> out = hits;
  if (scorer != nullptr) {
    try {
      std::vector<double> scores = scorer->score(query_text, hits);
      if (scores.size() != hits.size()) {
        throw Error(ErrorCode::scorer_unavailable, "scorer returned wrong count");
      }
      for (size_t i = 0; i < out.size(); ++i) out[i].score = scores[i];
    } catch (const Error& e) {
      if (e.code() != ErrorCode::scorer_unavailable) throw;
      if (warn) *warn << "warning: lightweight scorer unavailable, keeping dense order ("
                      << e.what() << ")\n";
      for (size_t i = 0; i < out.size(); ++i) out[i].score = hits[i].score;
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RetrievalHit& a, const RetrievalHit& b) { return a.score > b.score; });
  if (out.size() > k) out.resize(k);
  for (size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i + 1);
  return out;
}

// Provider contract: deterministic per instance, unit-normalized output.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingVector embed(const std::string& text) = 0;
  virtual size_t dim() const = 0;
};

// Fixed text -> vector table, typically loaded from a fixture file.
class TableEmbeddingProvider final : public EmbeddingProvider {
 public:
  TableEmbeddingProvider() = default;

  void put(const std::string& text, EmbeddingVector vec) {
    normalize_vector(vec);
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_) {
      throw Error(ErrorCode::dimension_mismatch, "table embedding dim mismatch");
    }
    table_[text] = std::move(vec);
  }

  // Fixture layout: JSONL of {"text": ..., "vec": [f32...]}.
  static TableEmbeddingProvider from_file(const std::string& path) {
    TableEmbeddingProvider provider;
    for_each_line(path, [&](size_t line_no, const std::string& line) {
      if (trim(line).empty()) return;
      json j = parse_json_line(path, line_no, line);
      if (!j.contains("text") || !j["text"].is_string() || !j.contains("vec") ||
          !j["vec"].is_array()) {
        throw Error(ErrorCode::malformed_record,
                    path + ":" + std::to_string(line_no) + ": expected {text, vec}");
      }
      EmbeddingVector vec;
      for (const auto& x : j["vec"]) vec.push_back(static_cast<float>(x.get<double>()));
      provider.put(j["text"].get<std::string>(), std::move(vec));
    });
    return provider;
  }

  EmbeddingVector embed(const std::string& text) override {
    auto it = table_.find(text);
    if (it == table_.end()) {
      throw Error(ErrorCode::provider_unavailable,
                  "no embedding recorded for text: " + text.substr(0, 80));
    }
    return it->second;
  }

  size_t dim() const override { return dim_; }

 private:
  std::unordered_map<std::string, EmbeddingVector> table_;
  size_t dim_ = 0;
};

// Deterministic content-hash embeddings; a stand-in retriever backend that
// needs no external service. Same text always maps to the same unit vector.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(size_t dim, uint64_t seed = 0) : dim_(dim), seed_(seed) {
    if (dim_ < 1) throw Error(ErrorCode::config, "hashing provider needs dim >= 1");
  }

  EmbeddingVector embed(const std::string& text) override {
    if (text.empty()) throw Error(ErrorCode::empty_input, "cannot embed empty text");
    std::mt19937_64 rng(fnv1a64(text) ^ (seed_ * 0x9E3779B97F4A7C15ull));
    EmbeddingVector v(dim_);
    for (auto& x : v) x = static_cast<float>(uniform_range(rng, -1.0, 1.0));
    if (vector_norm(v) < 1e-9) v[0] = 1.0f;
    normalize_vector(v);
    return v;
  }

  size_t dim() const override { return dim_; }

 private:
  size_t dim_;
  uint64_t seed_;
};

// One reformulation -> one pruned candidate list: embed, exact dense top-k,
// then the lightweight pruning stage.
class Retriever {
 public:
  Retriever(const EmbeddingStore& store, EmbeddingProvider& provider, RetrievalConfig config,
            LightweightScorer* scorer = nullptr)
      : store_(store), provider_(provider), config_(config), scorer_(scorer) {
    config_.validate();
  }

  std::vector<RetrievalHit> retrieve(const std::string& query_text) {
    if (trim(query_text).empty()) {
      throw Error(ErrorCode::empty_input, "cannot retrieve for empty text");
    }
    EmbeddingVector v = provider_.embed(query_text);
    auto hits = dense_topk(store_, v, config_.dense_k);
    auto pruned = lightweight_rerank(query_text, hits, config_.pruned_k, scorer_);
    calls_.fetch_add(1, std::memory_order_relaxed);
    return pruned;
  }

  const RetrievalConfig& config() const { return config_; }
  const EmbeddingStore& store() const { return store_; }
  long calls() const { return calls_.load(std::memory_order_relaxed); }

 private:
  const EmbeddingStore& store_;
  EmbeddingProvider& provider_;
  RetrievalConfig config_;
  LightweightScorer* scorer_;
  std::atomic<long> calls_{0};
};

}  // namespace malr
