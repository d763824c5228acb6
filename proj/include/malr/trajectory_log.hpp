#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "malr/common.hpp"
#include "malr/orchestrator.hpp"

namespace malr {

inline constexpr int kTrajectoryLogSchemaVersion = 1;

// Trajectory log: JSONL, one object per iteration record followed by one
// terminal summary object carrying the pool and termination state. Multiple
// trajectories may share one file; lines are matched up by
// (query_id, trajectory_id).
inline void write_trajectory_log(std::ostream& out, const Trajectory& traj,
                                 std::optional<uint64_t> seed = std::nullopt) {
  for (const auto& rec : traj.records) {
    ojson j;
    j["schema_version"] = kTrajectoryLogSchemaVersion;
    j["type"] = "iteration";
    j["query_id"] = traj.query_id;
    j["trajectory_id"] = traj.trajectory_id;
    j["index"] = rec.index;
    j["action"] = to_string(rec.decision.action);
    j["reason"] = rec.decision.reason;
    if (rec.overridden_from) j["overridden_from"] = *rec.overridden_from;
    if (rec.skipped) j["skipped"] = true;
    j["reformulations"] = rec.reformulations;
    j["retrieval_calls"] = rec.retrieval_calls;
    j["new_unique"] = rec.new_unique;
    if (rec.new_gold) j["new_gold"] = *rec.new_gold;
    out << j.dump() << "\n";
  }
  ojson s;
  s["schema_version"] = kTrajectoryLogSchemaVersion;
  s["type"] = "summary";
  s["query_id"] = traj.query_id;
  s["trajectory_id"] = traj.trajectory_id;
  s["mode"] = to_string(traj.mode);
  s["terminated_by"] = to_string(traj.terminated_by);
  if (traj.error) s["error"] = *traj.error;
  ojson pool = ojson::array();
  for (const auto& e : traj.pool.entries) {
    ojson p;
    p["statute_id"] = e.statute_id;
    p["best_score"] = e.best_score;
    p["first_iteration"] = e.first_iteration;
    p["source_reformulation"] = e.source_reformulation;
    pool.push_back(std::move(p));
  }
  s["pool"] = std::move(pool);
  if (seed) s["seed"] = *seed;
  out << s.dump() << "\n";
}

inline std::vector<Trajectory> read_trajectory_logs(const std::string& path) {
  std::vector<Trajectory> out;
  std::unordered_map<std::string, Trajectory> open;  // keyed by query_id \x1f trajectory_id
  std::vector<std::string> order;

  for_each_line(path, [&](size_t line_no, const std::string& line) {
    if (trim(line).empty()) return;
    json j = parse_json_line(path, line_no, line);
    auto where = [&] { return path + ":" + std::to_string(line_no); };
    if (!j.contains("type") || !j.contains("query_id") || !j.contains("trajectory_id")) {
      throw Error(ErrorCode::malformed_record, where() + ": missing type/query_id/trajectory_id");
    }
    std::string key =
        j["query_id"].get<std::string>() + "\x1f" + j["trajectory_id"].get<std::string>();
    auto it = open.find(key);
    if (it == open.end()) {
      Trajectory t;
      t.query_id = j["query_id"].get<std::string>();
      t.trajectory_id = j["trajectory_id"].get<std::string>();
      it = open.emplace(key, std::move(t)).first;
      order.push_back(key);
    }
    Trajectory& traj = it->second;
    std::string type = j["type"].get<std::string>();
    if (type == "iteration") {
      IterationRecord rec;
      rec.index = j.at("index").get<int>();
      auto action = planner_action_from_string(j.at("action").get<std::string>());
      if (!action) throw Error(ErrorCode::malformed_record, where() + ": unknown action");
      rec.decision.action = *action;
      rec.decision.reason = j.value("reason", std::string{});
      if (j.contains("overridden_from")) {
        rec.overridden_from = j["overridden_from"].get<std::string>();
      }
      rec.skipped = j.value("skipped", false);
      if (j.contains("reformulations")) {
        for (const auto& r : j["reformulations"]) {
          rec.reformulations.push_back(r.get<std::string>());
        }
      }
      rec.retrieval_calls = j.value("retrieval_calls", 0);
      rec.new_unique = j.value("new_unique", 0);
      if (j.contains("new_gold")) rec.new_gold = j["new_gold"].get<int>();
      traj.records.push_back(std::move(rec));
    } else if (type == "summary") {
      std::string mode = j.value("mode", "inference");
      traj.mode = (mode == "training") ? MasMode::training : MasMode::inference;
      auto t = terminated_by_from_string(j.value("terminated_by", "exit_action"));
      if (!t) throw Error(ErrorCode::malformed_record, where() + ": unknown terminated_by");
      traj.terminated_by = *t;
      if (j.contains("error")) traj.error = j["error"].get<std::string>();
      if (j.contains("pool")) {
        for (const auto& p : j["pool"]) {
          PoolEntry e;
          e.statute_id = p.at("statute_id").get<std::string>();
          e.best_score = p.value("best_score", 0.0);
          e.first_iteration = p.value("first_iteration", 0);
          e.source_reformulation = p.value("source_reformulation", std::string{});
          traj.pool.entries.push_back(std::move(e));
        }
      }
      // Summary closes the trajectory.
      out.push_back(std::move(traj));
      open.erase(it);
      order.erase(std::find(order.begin(), order.end(), key));
    } else {
      throw Error(ErrorCode::malformed_record, where() + ": unknown record type " + type);
    }
  });

  if (!open.empty()) {
    throw Error(ErrorCode::malformed_record,
                path + ": " + std::to_string(open.size()) + " trajectory(ies) without a summary");
  }
  return out;
}

}  // namespace malr
