#pragma once

// Planted offline dataset shared by the pipeline tests and the acceptance
// suite. Every query direction is a distinct coordinate axis, so its gold
// statutes are retrieved at similarity 1.0 and fillers score 0. Chat
// fixtures are scripted queues aligned with single-threaded call order:
// per query, planner -> rewrite -> planner(exit), then one rerank call.

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

struct PlantedDataset {
  std::string dir;           // dataset root
  std::string corpus_path;
  std::string queries_path;
  std::string fixtures_dir;  // embeddings + chat scripts
  size_t n_queries = 0;
};

inline PlantedDataset make_planted_dataset(const std::string& dir, size_t n_queries = 4,
                                           size_t fillers = 20,
                                           bool garbage_reranker = false) {
  namespace fs = std::filesystem;
  using ojson = nlohmann::ordered_json;
  PlantedDataset ds;
  ds.dir = dir;
  ds.n_queries = n_queries;
  ds.corpus_path = dir + "/corpus.jsonl";
  ds.queries_path = dir + "/queries.jsonl";
  ds.fixtures_dir = dir + "/mock";
  fs::create_directories(ds.fixtures_dir);

  size_t dim = n_queries + fillers;
  auto axis_json = [&](size_t i) {
    ojson arr = ojson::array();
    for (size_t d = 0; d < dim; ++d) arr.push_back(d == i ? 1.0 : 0.0);
    return arr;
  };

  std::ofstream corpus(ds.corpus_path, std::ios::binary);
  std::ofstream queries(ds.queries_path, std::ios::binary);
  std::ofstream embeddings(ds.fixtures_dir + "/embeddings.jsonl", std::ios::binary);
  std::ofstream texts(ds.fixtures_dir + "/text_embeddings.jsonl", std::ios::binary);
  std::ofstream mas_chat(ds.fixtures_dir + "/mas_chat.jsonl", std::ios::binary);
  std::ofstream rerank_chat(ds.fixtures_dir + "/rerank_chat.jsonl", std::ios::binary);

  for (size_t i = 0; i < n_queries; ++i) {
    std::string qid = "q" + std::to_string(i);
    std::vector<std::string> gold_ids = {"gold" + std::to_string(i) + "a"};
    if (i % 2 == 0) gold_ids.push_back("gold" + std::to_string(i) + "b");
    for (const auto& gid : gold_ids) {
      ojson s;
      s["id"] = gid;
      s["title"] = "Provision " + gid;
      s["text"] = "Article body for " + gid;
      corpus << s.dump() << "\n";
      ojson e;
      e["id"] = gid;
      e["vec"] = axis_json(i);
      embeddings << e.dump() << "\n";
    }
    ojson q;
    q["id"] = qid;
    q["text"] = "question " + std::to_string(i);
    q["gold_ids"] = gold_ids;
    queries << q.dump() << "\n";

    for (const char* prefix : {"question ", "rewrite "}) {
      ojson t;
      t["text"] = prefix + std::to_string(i);
      t["vec"] = axis_json(i);
      texts << t.dump() << "\n";
    }

    ojson planner1;
    planner1["response"] =
        R"({"action":"single_element","reason":"clarify the statutory terms"})";
    mas_chat << planner1.dump() << "\n";
    ojson rewrite;
    rewrite["response"] = std::string(R"({"queries":["rewrite )") + std::to_string(i) +
                          R"("]})";
    mas_chat << rewrite.dump() << "\n";
    ojson planner2;
    planner2["response"] = R"({"action":"exit","reason":"coverage looks complete"})";
    mas_chat << planner2.dump() << "\n";

    ojson rr;
    rr["response"] = garbage_reranker
                         ? std::string("no usable output here")
                         : std::string(R"({"selected_indices":[0,1,2,3,4,5,6,7,8,9]})");
    rerank_chat << rr.dump() << "\n";
    if (garbage_reranker) {
      // Parse retries consume additional scripted lines per query.
      for (int r = 0; r < 2; ++r) {
        ojson again;
        again["response"] = "still nothing";
        rerank_chat << again.dump() << "\n";
      }
    }
  }

  for (size_t f = 0; f < fillers; ++f) {
    std::string fid = "fill" + std::to_string(f);
    ojson s;
    s["id"] = fid;
    s["title"] = "Filler " + std::to_string(f);
    s["text"] = "Unrelated article " + std::to_string(f);
    corpus << s.dump() << "\n";
    ojson e;
    e["id"] = fid;
    e["vec"] = axis_json(n_queries + f);
    embeddings << e.dump() << "\n";
  }
  return ds;
}
