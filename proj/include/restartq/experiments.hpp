// experiments.hpp - replication, transient sampling and the scenario catalog.
//
// Replica k of a run seeded with S uses derive_seed(S, k); transient sample k
// likewise. Work is fanned out over threads by index and merged in index
// order, so results never depend on the degree of parallelism.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "restartq/analytics.hpp"
#include "restartq/engine.hpp"

namespace restartq {

// Calls fn(i) for i in [0, n) on up to `threads` workers. The first failure
// (lowest index) is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::uint64_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, threads);
  if (threads == 1 || n <= 1) {
    for (std::uint64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::uint64_t err_index = n;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= n || stop.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = static_cast<unsigned>(std::min<std::uint64_t>(threads, n));
  for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Replicated steady-state runs.

struct ReplicaStats {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  Counters counters;
  std::uint64_t final_queue = 0;
  double end_time = 0.0;
  bool truncated = false;
  SaturationVerdict verdict;
  double throughput = 0.0;   // departures / arrivals
  double utilization = 0.0;  // useful work / busy time
  friend bool operator==(const ReplicaStats&, const ReplicaStats&) = default;
};

inline bool operator==(const SaturationVerdict& a, const SaturationVerdict& b) {
  return a.saturated == b.saturated && a.last_departure_time == b.last_departure_time &&
         a.critical_time_estimate == b.critical_time_estimate &&
         a.departure_rate_before == b.departure_rate_before &&
         a.queue_at_last_departure == b.queue_at_last_departure && a.final_queue == b.final_queue;
}

struct MeanStat {
  double mean = 0.0;
  double std_error = 0.0;  // over replicas
  std::uint64_t count = 0;
  friend bool operator==(const MeanStat&, const MeanStat&) = default;
};

inline MeanStat mean_stat(const std::vector<double>& xs) {
  MeanStat s;
  s.count = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return s;
}

struct ReplicationSummary {
  std::uint64_t master_seed = 0;
  std::vector<ReplicaStats> replicas;  // ascending index
  MeanStat departures;
  MeanStat final_queue;
  MeanStat throughput;
  MeanStat utilization;
  MeanStat departure_rate_before;
  std::uint64_t saturated = 0;
  std::uint64_t truncated = 0;
  friend bool operator==(const ReplicationSummary&, const ReplicationSummary&) = default;
};

inline ReplicaStats replica_stats(const SimOutput& out, double horizon, std::uint64_t index,
                                  std::uint64_t seed, SaturationRule rule = {}) {
  ReplicaStats r;
  r.index = index;
  r.seed = seed;
  r.counters = out.counters;
  r.final_queue = out.final_queue;
  r.end_time = out.end_time;
  r.truncated = out.truncated;
  r.verdict = detect_saturation(out.trajectory, horizon, rule);
  const auto& c = out.counters;
  r.throughput = c.arrivals ? static_cast<double>(c.departures) / static_cast<double>(c.arrivals) : 0.0;
  r.utilization = c.busy_time > 0.0 ? c.useful_work_done / c.busy_time : 0.0;
  return r;
}

// Pure merge: the input order does not matter.
inline ReplicationSummary merge_replicas(std::vector<ReplicaStats> reps, std::uint64_t master_seed) {
  std::sort(reps.begin(), reps.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  ReplicationSummary s;
  s.master_seed = master_seed;
  std::vector<double> dep, fq, thr, util, rate;
  for (const auto& r : reps) {
    dep.push_back(static_cast<double>(r.counters.departures));
    fq.push_back(static_cast<double>(r.final_queue));
    thr.push_back(r.throughput);
    util.push_back(r.utilization);
    rate.push_back(r.verdict.departure_rate_before);
    s.saturated += r.verdict.saturated;
    s.truncated += r.truncated;
  }
  s.departures = mean_stat(dep);
  s.final_queue = mean_stat(fq);
  s.throughput = mean_stat(thr);
  s.utilization = mean_stat(util);
  s.departure_rate_before = mean_stat(rate);
  s.replicas = std::move(reps);
  return s;
}

struct ReplicateOptions {
  unsigned concurrency = 1;
  bool keep_outputs = false;
  SaturationRule rule;
};

struct Replication {
  ReplicationSummary summary;
  std::vector<SimOutput> outputs;  // by replica index, when kept
};

inline Replication replicate_runs(const SimConfig& cfg, std::uint64_t n, ReplicateOptions opt = {}) {
  if (n < 1) throw ConfigError("replicas must be >= 1");
  if (!cfg.arrival) throw ConfigError("arrival rate required");
  cfg.validate();
  std::vector<ReplicaStats> stats(n);
  std::vector<SimOutput> outputs(opt.keep_outputs ? n : 0);
  parallel_for(n, opt.concurrency, [&](std::uint64_t k) {
    SimConfig c = cfg;
    c.master_seed = derive_seed(cfg.master_seed, k);
    SimOutput out = simulate(c);
    stats[k] = replica_stats(out, c.horizon, k, c.master_seed, opt.rule);
    if (opt.keep_outputs) outputs[k] = std::move(out);
  });
  return {merge_replicas(std::move(stats), cfg.master_seed), std::move(outputs)};
}

inline ReplicationSummary replicate(const SimConfig& cfg, std::uint64_t n, unsigned concurrency = 1,
                                    SaturationRule rule = {}) {
  return replicate_runs(cfg, n, {concurrency, false, rule}).summary;
}

// ---------------------------------------------------------------------------
// Transient sampling of the total completion time.

struct TransientCase {
  DistSpec failure = DistSpec::exponential(1.0);
  DistSpec job = DistSpec::exponential(1.0);
  unsigned m = 1;
  Policy policy;
  StartMode start_mode = StartMode::Fresh;
  std::vector<double> fixed_sizes;  // non-empty: every sample uses this batch instead of drawing m sizes
};

struct TransientSamples {
  std::vector<double> theta;  // by sample index
  std::uint64_t truncated = 0;
};

inline double transient_sample(const TransientCase& tc, std::uint64_t seed, std::uint64_t event_cap,
                               bool* truncated = nullptr) {
  std::vector<double> batch = tc.fixed_sizes;
  if (batch.empty()) {
    RngStream sizes(seed, streams::kJobSizes);
    batch.resize(tc.m);
    for (auto& b : batch) b = sample(tc.job, sizes);
  }
  auto r = transient_completion(batch, tc.policy,
                                FailureTimeline(tc.failure, tc.start_mode, RngStream(seed, streams::kFailures)),
                                event_cap);
  if (truncated) *truncated = r.truncated;
  return r.theta;
}

inline TransientSamples transient_samples(const TransientCase& tc, std::uint64_t n, std::uint64_t master_seed,
                                          unsigned concurrency = 1, std::uint64_t event_cap = 10'000'000) {
  if (tc.m < 1 && tc.fixed_sizes.empty()) throw ConfigError("transient case needs m >= 1");
  if (tc.policy.kind == PolicyKind::DPS) throw ConfigError("transient sampling draws a single class; use ps");
  TransientSamples out;
  out.theta.resize(n);
  std::vector<char> trunc(n, 0);
  // Chunks keep the per-index overhead of the thread pool small.
  constexpr std::uint64_t kChunk = 256;
  const std::uint64_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, concurrency, [&](std::uint64_t c) {
    for (std::uint64_t k = c * kChunk; k < std::min(n, (c + 1) * kChunk); ++k) {
      bool t = false;
      out.theta[k] = transient_sample(tc, derive_seed(master_seed, k), event_cap, &t);
      trunc[k] = t;
    }
  });
  for (char t : trunc) out.truncated += t;
  return out;
}

// ---------------------------------------------------------------------------
// Scenario catalog.

inline const std::vector<std::string>& scenario_ids() {
  static const std::vector<std::string> ids{"ex1_instability",  "ex1_fragmentation", "ex2_renewal",
                                            "ex3_fcfs_tails",   "ex4_ps_jobcount",   "ex5_ps_disttype",
                                            "ex6_bounded_tradeoff"};
  return ids;
}

struct ScenarioSpec {
  std::string id;
  std::uint64_t master_seed = 1;
  std::optional<double> horizon;
  std::optional<std::uint64_t> replicas;
  std::optional<std::uint64_t> samples;
  std::optional<std::vector<double>> grid;
  std::optional<double> trace_stride;
  std::map<std::string, double> params;  // scenario knobs, see scenario_defaults
  TailWindow window;
  std::uint64_t event_cap = 10'000'000;
};

struct SimSeries {
  std::string name;
  SimConfig config;
  std::uint64_t replicas = 1;
  std::map<std::string, double> labels;
};

struct TransientSeries {
  std::string name;
  TransientCase tcase;
  std::uint64_t samples = 0;
  std::map<std::string, double> labels;
};

struct ResolvedScenario {
  ScenarioSpec spec;  // every optional filled in
  std::string grid_name;
  std::vector<SimSeries> sims;
  std::vector<TransientSeries> transients;
};

struct ScenarioDefaults {
  std::map<std::string, double> params;
  std::string grid_name;  // empty: no grid
  std::vector<double> grid;
  double horizon = 0.0;  // 0: transient scenario
  std::uint64_t replicas = 0;
  std::uint64_t samples = 0;
};

inline ScenarioDefaults scenario_defaults(const std::string& id) {
  if (id == "ex1_instability") return {{{"beta", 2.0}, {"mu", 0.05}}, "lambda", {0.1}, 1e5, 10, 0};
  if (id == "ex1_fragmentation")
    return {{{"lambda", 0.1}, {"mu", 0.05}, {"job", 2.0}, {"header", 0.0}}, "payload", {2.0, 1.5, 1.2, 1.0},
            2e5, 10, 0};
  if (id == "ex2_renewal")
    return {{{"mean_interarrival", 10.1}, {"pareto_index", 2.0}, {"failure_mean", 10.0}}, "beta", {4.0},
            1e5, 10, 0};
  if (id == "ex3_fcfs_tails") return {{{"m", 10.0}, {"alpha", 2.0}}, "", {}, 0.0, 0, 100'000};
  if (id == "ex4_ps_jobcount") return {{{"alpha", 4.0}, {"fcfs_m", 5.0}}, "m", {2.0, 5.0}, 0.0, 0, 100'000};
  if (id == "ex5_ps_disttype") return {{{"m", 5.0}, {"alpha", 4.0}}, "", {}, 0.0, 0, 100'000};
  if (id == "ex6_bounded_tradeoff")
    return {{{"lambda", 0.1}, {"mu", 0.1}, {"queue_cap", 10.0}, {"header", 0.2}},
            "B",
            {0.4, 1.0, 1.5, 2.0, 3.0, 5.0},
            1e6,
            1,
            0};
  throw ConfigError("unknown scenario '" + id + "'");
}

namespace detail {

inline std::string fmt_label(const std::string& key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s=%g", key.c_str(), v);
  return buf;
}

inline unsigned as_count(const std::map<std::string, double>& p, const std::string& key) {
  const double v = p.at(key);
  if (!(v >= 1.0 && v == std::floor(v) && v < 1e6)) throw ConfigError("scenario param '" + key + "' must be a positive integer");
  return static_cast<unsigned>(v);
}

// The three failure laws of the tail examples, each with mean as stated:
// Weibull shape 2 with mean 1.5, exponential with mean 2, Weibull shape 1/2
// with P(A > x) = exp(-sqrt(x) / 2).
inline DistSpec tail_failure_law(const std::string& kind) {
  if (kind == "weibull2") return DistSpec::weibull(1.5 / std::tgamma(1.5), 2.0);
  if (kind == "exponential") return DistSpec::exponential(0.5);
  return DistSpec::weibull(4.0, 0.5);
}

inline double weibull_shape_of(const DistSpec& d) {
  return d.family() == Family::Weibull ? d.as<Weibull>().shape : 1.0;
}

}  // namespace detail

inline ResolvedScenario resolve_scenario(const ScenarioSpec& in) {
  const ScenarioDefaults def = scenario_defaults(in.id);
  ResolvedScenario r;
  r.spec = in;
  ScenarioSpec& s = r.spec;
  r.grid_name = def.grid_name;

  auto params = def.params;
  for (const auto& [k, v] : in.params) {
    if (!params.count(k)) throw ConfigError("scenario " + in.id + ": unknown param '" + k + "'");
    if (!std::isfinite(v)) throw ConfigError("scenario " + in.id + ": param '" + k + "' must be finite");
    params[k] = v;
  }
  s.params = params;
  const bool simulated = def.horizon > 0.0;
  if (simulated) {
    if (in.samples) throw ConfigError("scenario " + in.id + " has no transient samples to override");
    s.horizon = in.horizon.value_or(def.horizon);
    s.replicas = in.replicas.value_or(def.replicas);
    s.trace_stride = in.trace_stride.value_or(*s.horizon / 20000.0);
    if (!(*s.horizon > 0.0 && std::isfinite(*s.horizon))) throw ConfigError("horizon must be finite and > 0");
    if (*s.replicas < 1) throw ConfigError("replicas must be >= 1");
  } else {
    if (in.horizon || in.replicas || in.trace_stride)
      throw ConfigError("scenario " + in.id + " is transient: use samples, not horizon/replicas");
    s.samples = in.samples.value_or(def.samples);
    if (*s.samples < 1) throw ConfigError("samples must be >= 1");
  }
  if (def.grid_name.empty()) {
    if (in.grid) throw ConfigError("scenario " + in.id + " has no grid");
  } else {
    s.grid = in.grid.value_or(def.grid);
    if (s.grid->empty()) throw ConfigError("grid must not be empty");
  }

  auto sim_base = [&] {
    SimConfig c;
    c.horizon = *s.horizon;
    c.master_seed = s.master_seed;
    c.trace_stride = *s.trace_stride;
    c.record_jobs = false;
    c.policy = Policy::ps();
    return c;
  };
  auto add_sim = [&](std::string name, SimConfig c, std::map<std::string, double> labels) {
    c.validate();
    r.sims.push_back({std::move(name), std::move(c), *s.replicas, std::move(labels)});
  };
  auto add_transient = [&](std::string name, TransientCase tc, std::map<std::string, double> labels) {
    r.transients.push_back({std::move(name), std::move(tc), *s.samples, std::move(labels)});
  };

  const std::string& id = in.id;
  if (id == "ex1_instability") {
    for (double lambda : *s.grid) {
      SimConfig c = sim_base();
      c.arrival = ArrivalSpec::poisson(lambda);
      c.jobs.size = DistSpec::deterministic(params["beta"]);
      c.failure = DistSpec::exponential(params["mu"]);
      add_sim(detail::fmt_label("lambda", lambda), c, {{"lambda", lambda}});
    }
  } else if (id == "ex1_fragmentation") {
    for (double payload : *s.grid) {
      SimConfig c = sim_base();
      c.arrival = ArrivalSpec::poisson(params["lambda"]);
      c.jobs.size = DistSpec::deterministic(params["job"]);
      c.jobs.header = params["header"];
      c.fragment_payload = payload;
      c.failure = DistSpec::exponential(params["mu"]);
      add_sim(detail::fmt_label("payload", payload), c, {{"payload", payload}});
    }
  } else if (id == "ex2_renewal") {
    const double a = params["pareto_index"];
    if (!(a > 1.0)) throw ConfigError("pareto_index must be > 1");
    const double scale = params["mean_interarrival"] * (a - 1.0) / a;
    for (double beta : *s.grid) {
      SimConfig c = sim_base();
      c.arrival = ArrivalSpec::renewal(DistSpec::pareto(scale, a));
      c.jobs.size = DistSpec::deterministic(beta);
      c.failure = DistSpec::exponential(1.0 / params["failure_mean"]);
      add_sim(detail::fmt_label("beta", beta), c, {{"beta", beta}});
    }
  } else if (id == "ex3_fcfs_tails") {
    const unsigned m = detail::as_count(params, "m");
    for (std::string kind : {"weibull2", "exponential", "weibull05"}) {
      TransientCase tc;
      tc.failure = detail::tail_failure_law(kind);
      tc.job = hazard_proportional_job_dist(tc.failure, params["alpha"]);
      tc.m = m;
      tc.policy = Policy::fcfs();
      const double gamma = detail::weibull_shape_of(tc.failure);
      add_transient(kind, tc,
                    {{"m", static_cast<double>(m)}, {"gamma", gamma},
                     {"theory_index", theoretical_tail_index(params["alpha"], gamma, m, PolicyKind::FCFS)}});
    }
  } else if (id == "ex4_ps_jobcount") {
    const DistSpec failure = detail::tail_failure_law("weibull2");
    const DistSpec job = hazard_proportional_job_dist(failure, params["alpha"]);
    auto add = [&](Policy p, unsigned m) {
      TransientCase tc{failure, job, m, p, StartMode::Fresh, {}};
      add_transient(policy_name(p.kind) + "_m" + std::to_string(m), tc,
                    {{"m", static_cast<double>(m)}, {"theory_index", theoretical_tail_index(params["alpha"], 2.0, m, p.kind)}});
    };
    for (double mv : *s.grid) {
      if (!(mv >= 1.0 && mv == std::floor(mv))) throw ConfigError("grid values for m must be positive integers");
      add(Policy::ps(), static_cast<unsigned>(mv));
    }
    add(Policy::fcfs(), detail::as_count(params, "fcfs_m"));
  } else if (id == "ex5_ps_disttype") {
    const unsigned m = detail::as_count(params, "m");
    for (std::string kind : {"weibull2", "weibull05"}) {
      const DistSpec failure = detail::tail_failure_law(kind);
      const DistSpec job = hazard_proportional_job_dist(failure, params["alpha"]);
      const double gamma = detail::weibull_shape_of(failure);
      for (Policy p : {Policy::ps(), Policy::fcfs()}) {
        TransientCase tc{failure, job, m, p, StartMode::Fresh, {}};
        add_transient(policy_name(p.kind) + "_" + kind, tc,
                      {{"m", static_cast<double>(m)}, {"gamma", gamma},
                       {"theory_index", theoretical_tail_index(params["alpha"], gamma, m, p.kind)}});
      }
    }
  } else if (id == "ex6_bounded_tradeoff") {
    const double cap = params["queue_cap"];
    if (!(cap >= 1.0 && cap == std::floor(cap))) throw ConfigError("queue_cap must be a positive integer");
    for (double b : *s.grid) {
      SimConfig c = sim_base();
      c.arrival = ArrivalSpec::poisson(params["lambda"]);
      c.jobs.size = DistSpec::deterministic(b);
      c.jobs.header = params["header"];
      if (!(b > params["header"])) throw ConfigError("ex6: every job size must exceed the header");
      c.failure = DistSpec::exponential(params["mu"]);
      c.queue_cap = static_cast<std::uint64_t>(cap);
      const auto bound = throughput_lower_bound(params["lambda"], params["mu"], b, *c.queue_cap);
      add_sim(detail::fmt_label("B", b), c,
              {{"B", b}, {"throughput_bound", bound.clamped}, {"throughput_bound_raw", bound.raw}});
    }
  }
  return r;
}

struct SimSeriesResult {
  const SimSeries* series;
  Replication rep;
};

struct TransientSeriesResult {
  const TransientSeries* series;
  TransientSamples samples;
  std::optional<TailEstimate> tail;
  std::string tail_error;  // set when the estimate could not be formed
};

struct ScenarioResult {
  std::vector<SimSeriesResult> sims;
  std::vector<TransientSeriesResult> transients;
};

// Runs every series of a resolved scenario. `resolved` must outlive the result.
inline ScenarioResult execute_scenario(const ResolvedScenario& resolved, unsigned concurrency = 1,
                                       bool keep_outputs = true) {
  ScenarioResult out;
  for (const auto& s : resolved.sims)
    out.sims.push_back({&s, replicate_runs(s.config, s.replicas, {concurrency, keep_outputs, {}})});
  for (const auto& t : resolved.transients) {
    TransientSeriesResult res{&t, transient_samples(t.tcase, t.samples, resolved.spec.master_seed, concurrency,
                                                    resolved.spec.event_cap),
                              std::nullopt, {}};
    try {
      res.tail = estimate_tail_index(res.samples.theta, resolved.spec.window);
    } catch (const EstimationError& e) {
      res.tail_error = e.what();
    }
    out.transients.push_back(std::move(res));
  }
  return out;
}

}  // namespace restartq
