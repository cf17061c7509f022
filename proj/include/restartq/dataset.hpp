// dataset.hpp - on-disk output: CSV with 17 significant digits and LF line
// endings, JSON Lines summaries and a manifest per run directory.
//
// Scenario layout:
//   <out>/<scenario>/manifest.json
//   <out>/<scenario>/resolved_config.yaml
//   <out>/<scenario>/summary.jsonl
//   <out>/<scenario>/<series>/r<k>/trajectory.csv   (t,Q,D,drops)
//   <out>/<scenario>/<series>/ccdf.csv              (t,ccdf)
//   <out>/<scenario>/<series>/samples.csv           (theta)

#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "restartq/experiments.hpp"

#ifndef RESTARTQ_VERSION
#define RESTARTQ_VERSION "0.0.0"
#endif

namespace restartq::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + p.string());
  return out;
}

inline void write_text(const fs::path& p, const std::string& text) {
  auto out = open_out(p);
  out << text;
}

inline void write_trajectory_csv(const fs::path& p, const std::vector<TracePoint>& tr) {
  auto out = open_out(p);
  out << "t,Q,D,drops\n";
  for (const auto& x : tr) out << g17(x.t) << ',' << x.queue << ',' << x.departures << ',' << x.drops << '\n';
}

inline void write_jobs_csv(const fs::path& p, const std::vector<JobRecord>& jobs) {
  auto out = open_out(p);
  out << "id,class,size,arrival,departure,sojourn,attempts\n";
  for (const auto& j : jobs)
    out << j.id << ',' << j.job_class << ',' << g17(j.size) << ',' << g17(j.arrival) << ',' << g17(j.departure)
        << ',' << g17(j.sojourn()) << ',' << j.attempts << '\n';
}

inline void write_ccdf_csv(const fs::path& p, const std::vector<double>& samples) {
  auto out = open_out(p);
  out << "t,ccdf\n";
  for (const auto& [t, c] : empirical_ccdf_thinned(samples)) out << g17(t) << ',' << g17(c) << '\n';
}

inline void write_samples_csv(const fs::path& p, const std::vector<double>& samples) {
  auto out = open_out(p);
  out << "theta\n";
  for (double x : samples) out << g17(x) << '\n';
}

// First numeric column of a CSV file; a non-numeric first line is a header.
inline std::vector<double> read_samples_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open samples file " + p.string());
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string cell = line.substr(0, line.find(','));
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0') {
      if (lineno == 1) continue;
      throw ConfigError(p.string() + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
    }
    out.push_back(v);
  }
  return out;
}

inline json labels_json(const std::map<std::string, double>& labels) {
  json j = json::object();
  for (const auto& [k, v] : labels) j[k] = v;
  return j;
}

inline json mean_json(const MeanStat& m) { return {{"mean", m.mean}, {"stderr", m.std_error}, {"n", m.count}}; }

inline json replica_json(const ReplicaStats& r) {
  const auto& c = r.counters;
  return {{"index", r.index},
          {"seed", r.seed},
          {"arrivals", c.arrivals},
          {"departures", c.departures},
          {"drops", c.drops},
          {"failures", c.failures},
          {"events", c.events},
          {"final_queue", r.final_queue},
          {"end_time", r.end_time},
          {"busy_time", c.busy_time},
          {"useful_work", c.useful_work_done},
          {"throughput", r.throughput},
          {"utilization", r.utilization},
          {"saturated", r.verdict.saturated},
          {"last_departure_time", r.verdict.last_departure_time},
          {"critical_time", r.verdict.critical_time_estimate},
          {"departure_rate_before", r.verdict.departure_rate_before},
          {"queue_at_last_departure", r.verdict.queue_at_last_departure},
          {"truncated", r.truncated}};
}

inline json merged_json(const ReplicationSummary& s) {
  return {{"master_seed", s.master_seed},
          {"replicas", s.replicas.size()},
          {"saturated", s.saturated},
          {"truncated", s.truncated},
          {"departures", mean_json(s.departures)},
          {"final_queue", mean_json(s.final_queue)},
          {"throughput", mean_json(s.throughput)},
          {"utilization", mean_json(s.utilization)},
          {"departure_rate_before", mean_json(s.departure_rate_before)}};
}

inline json tail_json(const TailEstimate& t) {
  return {{"slope", t.slope},
          {"stderr", t.std_error},
          {"window", {t.window.lower, t.window.upper}},
          {"sample_count", t.sample_count},
          {"points", t.points}};
}

inline json transient_json(const TransientSamples& s, const std::optional<TailEstimate>& tail,
                           const std::string& tail_error) {
  double mean = 0.0;
  for (double x : s.theta) mean += x;
  if (!s.theta.empty()) mean /= static_cast<double>(s.theta.size());
  json j = {{"samples", s.theta.size()}, {"truncated", s.truncated}, {"mean_theta", mean}};
  if (tail) j["tail"] = tail_json(*tail);
  else j["tail_error"] = tail_error;
  return j;
}

inline void append_jsonl(std::ofstream& out, const json& j) { out << j.dump() << '\n'; }

inline json base_manifest(const std::string& kind, const std::string& resolved_yaml) {
  return {{"tool", "restartq"},
          {"version", RESTARTQ_VERSION},
          {"kind", kind},
          {"status", "ok"},
          {"config", resolved_yaml}};
}

inline void write_manifest(const fs::path& dir, const json& manifest) {
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline std::string replica_dir(std::uint64_t k) { return "r" + std::to_string(k); }

// Writes a scenario dataset under out_dir / scenario id; returns the manifest.
inline json write_scenario_dataset(const fs::path& out_dir, const ResolvedScenario& rs, const ScenarioResult& res,
                                   const std::string& resolved_yaml) {
  const fs::path root = out_dir / rs.spec.id;
  fs::create_directories(root);
  write_text(root / "resolved_config.yaml", resolved_yaml);
  json manifest = base_manifest("experiment", resolved_yaml);
  manifest["scenario"] = rs.spec.id;
  manifest["master_seed"] = rs.spec.master_seed;
  json series = json::array();

  auto summary = open_out(root / "summary.jsonl");
  for (const auto& s : res.sims) {
    const fs::path dir = root / s.series->name;
    json seeds = json::array();
    for (std::size_t k = 0; k < s.rep.summary.replicas.size(); ++k) {
      const auto& r = s.rep.summary.replicas[k];
      seeds.push_back(r.seed);
      if (k < s.rep.outputs.size())
        write_trajectory_csv(dir / replica_dir(r.index) / "trajectory.csv", s.rep.outputs[k].trajectory);
      json rec = {{"record", "replica"}, {"series", s.series->name}, {"labels", labels_json(s.series->labels)}};
      rec.update(replica_json(r));
      append_jsonl(summary, rec);
    }
    json rec = {{"record", "merged"}, {"series", s.series->name}, {"labels", labels_json(s.series->labels)}};
    rec.update(merged_json(s.rep.summary));
    append_jsonl(summary, rec);
    series.push_back({{"name", s.series->name}, {"replica_seeds", seeds}});
  }
  for (const auto& t : res.transients) {
    const fs::path dir = root / t.series->name;
    write_samples_csv(dir / "samples.csv", t.samples.theta);
    write_ccdf_csv(dir / "ccdf.csv", t.samples.theta);
    json rec = {{"record", "transient"}, {"series", t.series->name}, {"labels", labels_json(t.series->labels)}};
    rec.update(transient_json(t.samples, t.tail, t.tail_error));
    append_jsonl(summary, rec);
    series.push_back({{"name", t.series->name}, {"sample_seeds", "derive_seed(master_seed, k)"}});
  }
  if (rs.spec.id == "ex6_bounded_tradeoff") {
    auto out = open_out(root / "tradeoff.csv");
    out << "B,throughput,utilization,throughput_bound\n";
    for (const auto& s : res.sims)
      out << g17(s.series->labels.at("B")) << ',' << g17(s.rep.summary.throughput.mean) << ','
          << g17(s.rep.summary.utilization.mean) << ',' << g17(s.series->labels.at("throughput_bound")) << '\n';
  }
  manifest["series"] = series;
  write_manifest(root, manifest);
  return manifest;
}

}  // namespace restartq::io
