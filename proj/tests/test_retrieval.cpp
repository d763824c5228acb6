#include "malr/retrieval.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "test_util.hpp"

using namespace malr;

namespace {

EmbeddingStore store_from(std::vector<std::pair<std::string, EmbeddingVector>> rows) {
  RawEmbeddingFile file;
  file.dim = static_cast<uint32_t>(rows.front().second.size());
  file.rows = std::move(rows);
  return EmbeddingStore::from_raw(file);
}

}  // namespace

TEST_CASE("dense_topk identity and hand-computed similarities") {
  auto store = store_from({
      {"a", {1.0f, 0.0f}},
      {"b", {0.0f, 1.0f}},
      {"c", {0.6f, 0.8f}},
  });
  auto hits = dense_topk(store, {1.0f, 0.0f}, 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].statute_id == "a");
  CHECK(hits[0].similarity == Catch::Approx(1.0).margin(1e-9));
  CHECK(hits[0].rank == 1);
  CHECK(hits[1].statute_id == "c");
  CHECK(hits[1].similarity == Catch::Approx(0.6).margin(1e-6));

  // Query equal to a stored vector puts that statute at rank 1 with sim 1.
  auto self = dense_topk(store, store.vector_for("c"), 1);
  CHECK(self[0].statute_id == "c");
  CHECK(self[0].similarity == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("dense_topk tie-break is ascending id") {
  auto store = store_from({
      {"zz", {1.0f, 0.0f}},
      {"aa", {1.0f, 0.0f}},
  });
  auto hits = dense_topk(store, {1.0f, 0.0f}, 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].statute_id == "aa");
}

TEST_CASE("dense_topk returns min(k, n) hits and checks dimensions") {
  auto store = store_from({{"a", {1.0f, 0.0f}}, {"b", {0.0f, 1.0f}}});
  CHECK(dense_topk(store, {1.0f, 0.0f}, 30).size() == 2);
  CHECK_THROWS_AS(dense_topk(store, {1.0f, 0.0f, 0.0f}, 2), Error);
}

TEST_CASE("dense_topk equals a naive full-sort oracle on random stores") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    size_t dim = 2 + rng() % 15;           // <= 16
    size_t n = 1 + rng() % 500;            // <= 500
    RawEmbeddingFile file;
    file.dim = static_cast<uint32_t>(dim);
    for (size_t i = 0; i < n; ++i) {
      EmbeddingVector v(dim);
      for (auto& x : v) x = static_cast<float>(uniform_range(rng, -1.0, 1.0));
      if (vector_norm(v) < 1e-6) v[0] = 1.0f;
      // A few deliberate duplicates exercise the tie rule.
      if (i > 0 && rng() % 7 == 0) v = file.rows[rng() % i].second;
      file.rows.emplace_back("doc" + std::to_string(i), std::move(v));
    }
    EmbeddingStore store = EmbeddingStore::from_raw(file);
    EmbeddingVector q(dim);
    for (auto& x : q) x = static_cast<float>(uniform_range(rng, -1.0, 1.0));
    if (vector_norm(q) < 1e-6) q[0] = 1.0f;
    normalize_vector(q);
    size_t k = 1 + rng() % 40;

    auto hits = dense_topk(store, q, k);

    // Full-sort oracle over raw dot products.
    std::vector<std::pair<double, std::string>> all;
    for (size_t i = 0; i < store.size(); ++i) {
      const float* r = store.row(i);
      double dot = 0;
      for (size_t d = 0; d < dim; ++d) dot += double(r[d]) * double(q[d]);
      all.emplace_back(dot, store.ids()[i]);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    size_t take = std::min(k, n);
    REQUIRE(hits.size() == take);
    for (size_t i = 0; i < take; ++i) {
      REQUIRE(hits[i].statute_id == all[i].second);
      REQUIRE(hits[i].similarity >= -1.0);
      REQUIRE(hits[i].similarity <= 1.0);
      if (i > 0) REQUIRE(hits[i - 1].similarity >= hits[i].similarity);
    }
  }
}

TEST_CASE("lightweight_rerank pass-through, mock scorer, and short lists") {
  auto store = store_from({
      {"a", {1.0f, 0.0f}},
      {"b", {0.8f, 0.6f}},
      {"c", {0.6f, 0.8f}},
      {"d", {0.0f, 1.0f}},
  });
  auto hits = dense_topk(store, {1.0f, 0.0f}, 4);

  auto kept = lightweight_rerank("q", hits, 2);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].statute_id == hits[0].statute_id);
  CHECK(kept[1].statute_id == hits[1].statute_id);
  CHECK(kept[0].rank == 1);

  struct NegatingScorer final : LightweightScorer {
    std::vector<double> score(const std::string&, const std::vector<RetrievalHit>& h) override {
      std::vector<double> out;
      for (const auto& x : h) out.push_back(-x.similarity);
      return out;
    }
  } negate;
  auto reversed = lightweight_rerank("q", hits, 4, &negate);
  // Sort oracle: negated similarity reverses dense order.
  std::vector<std::string> expect;
  for (auto it = hits.rbegin(); it != hits.rend(); ++it) expect.push_back(it->statute_id);
  for (size_t i = 0; i < reversed.size(); ++i) REQUIRE(reversed[i].statute_id == expect[i]);

  // 4 hits, k=10: everything survives.
  CHECK(lightweight_rerank("q", hits, 10).size() == 4);

  struct BrokenScorer final : LightweightScorer {
    std::vector<double> score(const std::string&, const std::vector<RetrievalHit>&) override {
      throw Error(ErrorCode::scorer_unavailable, "offline");
    }
  } broken;
  std::ostringstream warnings;
  auto fallback = lightweight_rerank("q", hits, 4, &broken, &warnings);
  for (size_t i = 0; i < hits.size(); ++i) REQUIRE(fallback[i].statute_id == hits[i].statute_id);
  CHECK(warnings.str().find("warning") != std::string::npos);
}

TEST_CASE("embedding providers are deterministic and unit-normalized") {
  HashingEmbeddingProvider hashing(8, 3);
  auto v1 = hashing.embed("some text");
  auto v2 = hashing.embed("some text");
  CHECK(v1 == v2);
  CHECK(std::abs(vector_norm(v1) - 1.0) < 1e-6);
  CHECK(hashing.embed("other text") != v1);
  CHECK_THROWS_AS(hashing.embed(""), Error);

  TableEmbeddingProvider table;
  table.put("q1", {3.0f, 4.0f});
  auto tv = table.embed("q1");
  CHECK(tv[0] == Catch::Approx(0.6f));
  CHECK(tv[1] == Catch::Approx(0.8f));
  try {
    table.embed("unknown");
    FAIL("expected ProviderUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::provider_unavailable);
  }
}

TEST_CASE("retrieve runs embed -> dense -> prune on a planted fixture") {
  // Orthogonal embeddings: the planted statute is the only one aligned with
  // the query direction.
  RawEmbeddingFile file;
  file.dim = 4;
  file.rows = {
      {"gold", {0.0f, 1.0f, 0.0f, 0.0f}},
      {"n1", {1.0f, 0.0f, 0.0f, 0.0f}},
      {"n2", {0.0f, 0.0f, 1.0f, 0.0f}},
      {"n3", {0.0f, 0.0f, 0.0f, 1.0f}},
      {"n4", {-1.0f, 0.0f, 0.0f, 0.0f}},
  };
  EmbeddingStore store = EmbeddingStore::from_raw(file);
  TableEmbeddingProvider provider;
  provider.put("the planted query", {0.0f, 1.0f, 0.0f, 0.0f});

  RetrievalConfig config;
  config.dense_k = 30;
  config.pruned_k = 10;
  Retriever retriever(store, provider, config);
  auto hits = retriever.retrieve("the planted query");
  REQUIRE(hits.size() == 5);  // store of 5 docs, dense_k=30 -> 5 hits
  CHECK(hits[0].statute_id == "gold");
  CHECK(hits[0].similarity == Catch::Approx(1.0).margin(1e-9));
  CHECK(retriever.calls() == 1);

  // pruned_k > dense_k is a configuration error at construction.
  RetrievalConfig bad;
  bad.dense_k = 5;
  bad.pruned_k = 10;
  CHECK_THROWS_AS(Retriever(store, provider, bad), Error);
}

TEST_CASE("retrieve results are unique, bounded, and drawn from the store") {
  std::mt19937_64 rng(1234);
  RawEmbeddingFile file;
  file.dim = 8;
  for (int i = 0; i < 100; ++i) {
    EmbeddingVector v(8);
    for (auto& x : v) x = static_cast<float>(uniform_range(rng, -1.0, 1.0));
    file.rows.emplace_back("s" + std::to_string(i), std::move(v));
  }
  EmbeddingStore store = EmbeddingStore::from_raw(file);
  HashingEmbeddingProvider provider(8);
  Retriever retriever(store, provider, RetrievalConfig{});
  for (int t = 0; t < 20; ++t) {
    auto hits = retriever.retrieve("query " + std::to_string(t));
    REQUIRE(hits.size() <= 10);
    std::unordered_set<std::string> ids;
    for (const auto& h : hits) {
      REQUIRE(ids.insert(h.statute_id).second);
      REQUIRE(store.contains(h.statute_id));
    }
  }
}

TEST_CASE("store rejects duplicates, zero vectors, and non-finite entries") {
  RawEmbeddingFile dup;
  dup.dim = 2;
  dup.rows = {{"a", {1.0f, 0.0f}}, {"a", {0.0f, 1.0f}}};
  CHECK_THROWS_AS(EmbeddingStore::from_raw(dup), Error);

  RawEmbeddingFile zero;
  zero.dim = 2;
  zero.rows = {{"a", {0.0f, 0.0f}}};
  CHECK_THROWS_AS(EmbeddingStore::from_raw(zero), Error);

  RawEmbeddingFile nan_file;
  nan_file.dim = 2;
  nan_file.rows = {{"a", {std::numeric_limits<float>::quiet_NaN(), 1.0f}}};
  CHECK_THROWS_AS(EmbeddingStore::from_raw(nan_file), Error);
}

TEST_CASE("embedding files round-trip between JSONL and the packed cache") {
  std::mt19937_64 rng(555);
  TempDir dir("emb");
  RawEmbeddingFile file;
  file.dim = 6;
  for (int i = 0; i < 40; ++i) {
    EmbeddingVector v(6);
    for (auto& x : v) x = static_cast<float>(uniform_range(rng, -2.0, 2.0));
    file.rows.emplace_back("id-" + std::to_string(i), std::move(v));
  }

  // JSONL -> binary -> JSONL preserves ids and exact float values.
  save_embeddings_jsonl(file, dir.file("e.jsonl"));
  RawEmbeddingFile from_jsonl = load_embeddings_jsonl(dir.file("e.jsonl"));
  save_embeddings_binary(from_jsonl, dir.file("e.bin"));
  RawEmbeddingFile from_bin = load_embeddings_binary(dir.file("e.bin"));
  REQUIRE(from_bin.dim == file.dim);
  REQUIRE(from_bin.rows.size() == file.rows.size());
  for (size_t i = 0; i < file.rows.size(); ++i) {
    REQUIRE(from_bin.rows[i].first == file.rows[i].first);
    REQUIRE(from_bin.rows[i].second == file.rows[i].second);  // bit-exact floats
  }

  // Canonical serializations are byte-stable in both directions.
  save_embeddings_jsonl(from_bin, dir.file("e2.jsonl"));
  CHECK(slurp(dir.file("e.jsonl")) == slurp(dir.file("e2.jsonl")));
  save_embeddings_binary(from_bin, dir.file("e2.bin"));
  CHECK(slurp(dir.file("e.bin")) == slurp(dir.file("e2.bin")));

  // The store loads either form identically.
  EmbeddingStore s1 = EmbeddingStore::load(dir.file("e.jsonl"));
  EmbeddingStore s2 = EmbeddingStore::load(dir.file("e.bin"));
  REQUIRE(s1.size() == s2.size());
  for (const auto& id : s1.ids()) REQUIRE(s1.vector_for(id) == s2.vector_for(id));
  for (const auto& id : s1.ids()) {
    REQUIRE(std::abs(vector_norm(s1.vector_for(id)) - 1.0) < 1e-6);
  }
}

TEST_CASE("binary cache rejects corrupt files") {
  TempDir dir("embbad");
  write_file(dir.file("bad.bin"), std::string("MALR-EMZ\0xxxx", 13));
  CHECK_THROWS_AS(load_embeddings_binary(dir.file("bad.bin")), Error);

  RawEmbeddingFile file;
  file.dim = 2;
  file.rows = {{"a", {1.0f, 0.0f}}};
  save_embeddings_binary(file, dir.file("ok.bin"));
  std::string bytes = slurp(dir.file("ok.bin"));
  write_file(dir.file("trunc.bin"), bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_embeddings_binary(dir.file("trunc.bin")), Error);
}
