// engine.hpp - event-exact simulation of a single unit-capacity server whose
// channel fails at the points of a renewal process. Every failure wipes the
// accrued service of each job in service; the job then starts from scratch.
//
// Between consecutive events all service rates are constant, so the engine
// jumps from event to event (arrival, failure, earliest completion) with no
// time stepping. Sharing policies (PS, DPS and PS_IDLE) use a virtual clock:
// V advances at 1 / (total weight in system), a class-k job accrues
// w_k * (V - V_entry), and completion tags are kept in ordered sets. On a
// failure V restarts at zero; jobs already re-based at an earlier failure keep
// their tag (size / weight) untouched, so only the jobs that arrived since the
// previous failure move and an event costs O(log Q) amortized.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "restartq/channel.hpp"
#include "restartq/distributions.hpp"
#include "restartq/errors.hpp"
#include "restartq/rng.hpp"
#include "restartq/workload.hpp"

namespace restartq {

enum class PolicyKind { FCFS, FCFS_IDLE, PS, PS_IDLE, DPS };

inline std::string policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::FCFS: return "fcfs";
    case PolicyKind::FCFS_IDLE: return "fcfs_idle";
    case PolicyKind::PS: return "ps";
    case PolicyKind::PS_IDLE: return "ps_idle";
    case PolicyKind::DPS: return "dps";
  }
  return "?";
}

struct Policy {
  PolicyKind kind = PolicyKind::FCFS;
  std::vector<double> weights;  // DPS only, indexed by job class

  static Policy fcfs() { return {PolicyKind::FCFS, {}}; }
  static Policy fcfs_idle() { return {PolicyKind::FCFS_IDLE, {}}; }
  static Policy ps() { return {PolicyKind::PS, {}}; }
  static Policy ps_idle() { return {PolicyKind::PS_IDLE, {}}; }
  static Policy dps(std::vector<double> w) {
    for (double x : w)
      if (!(std::isfinite(x) && x > 0.0)) throw ConfigError("dps weights must be > 0");
    if (w.empty()) throw ConfigError("dps requires at least one weight");
    return {PolicyKind::DPS, std::move(w)};
  }

  bool sharing() const { return kind == PolicyKind::PS || kind == PolicyKind::PS_IDLE || kind == PolicyKind::DPS; }
  bool idles() const { return kind == PolicyKind::FCFS_IDLE || kind == PolicyKind::PS_IDLE; }
  double weight(std::size_t job_class) const {
    if (kind != PolicyKind::DPS) return 1.0;
    if (job_class >= weights.size()) throw ConfigError("job class has no dps weight");
    return weights[job_class];
  }
};

struct InitialJob {
  double size;
  std::size_t job_class = 0;
};

struct SimConfig {
  std::optional<ArrivalSpec> arrival;  // absent: transient run
  JobSpec jobs{DistSpec::deterministic(1.0)};
  std::optional<double> fragment_payload;  // split each arriving job
  std::vector<InitialJob> initial_jobs;
  DistSpec failure = DistSpec::exponential(1.0);
  StartMode start_mode = StartMode::Fresh;
  Policy policy;
  double horizon = kInf;
  std::optional<std::uint64_t> queue_cap;
  std::uint64_t master_seed = 1;
  double trace_stride = 0.0;    // minimum time between recorded trace points; 0 records every event
  std::uint64_t event_cap = 0;  // 0: unlimited
  bool record_jobs = true;

  void validate() const {
    if (arrival) {
      if (!(horizon > 0.0 && std::isfinite(horizon)))
        throw ConfigError("horizon must be finite and > 0 when arrivals are simulated");
      jobs.validate();
      if (fragment_payload && !(*fragment_payload > 0.0))
        throw ConfigError("fragment payload must be > 0");
      if (policy.idles()) throw ConfigError("idle policies are transient-only");
    } else {
      if (initial_jobs.empty()) throw ConfigError("arrival rate required (or initial jobs for a transient run)");
      if (!(horizon > 0.0)) throw ConfigError("horizon must be > 0");
    }
    for (const auto& j : initial_jobs)
      if (!(j.size > 0.0 && std::isfinite(j.size))) throw ConfigError("initial job sizes must be > 0");
    if (queue_cap && *queue_cap < 1) throw ConfigError("queue_cap must be >= 1");
    if (!(trace_stride >= 0.0)) throw ConfigError("trace_stride must be >= 0");
    if (policy.kind == PolicyKind::DPS) {
      for (const auto& j : initial_jobs) policy.weight(j.job_class);
      if (arrival && jobs.class_probs.size() > policy.weights.size())
        throw ConfigError("dps: more job classes than weights");
    }
  }
};

struct TracePoint {
  double t;
  std::uint64_t queue;
  std::uint64_t departures;
  std::uint64_t drops;
  std::uint64_t arrivals;
  friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

struct JobRecord {
  std::uint64_t id;
  std::size_t job_class;
  double size;
  double arrival;
  double departure;
  std::uint64_t attempts;  // N_i: 1 + failures that wiped accrued service
  double sojourn() const { return departure - arrival; }
  friend bool operator==(const JobRecord&, const JobRecord&) = default;
};

struct Counters {
  std::uint64_t arrivals = 0;  // admitted or dropped jobs (fragments count individually)
  std::uint64_t departures = 0;
  std::uint64_t drops = 0;
  std::uint64_t failures = 0;
  std::uint64_t events = 0;
  double busy_time = 0.0;          // total service effort, wasted attempts included
  double useful_work_done = 0.0;   // sum over departures of (size - header)
  double last_departure_time = 0.0;
  friend bool operator==(const Counters&, const Counters&) = default;
};

struct SimOutput {
  std::vector<TracePoint> trajectory;
  Counters counters;
  std::vector<JobRecord> jobs;  // completed jobs, in departure order
  std::uint64_t final_queue = 0;
  double end_time = 0.0;
  bool truncated = false;  // event cap reached
  friend bool operator==(const SimOutput&, const SimOutput&) = default;
};

enum class EventKind { Start, Arrival, Failure, Completion, Horizon };

// Observable state of one job, for invariant checks.
struct JobView {
  std::uint64_t id;
  std::size_t job_class;
  double size;
  double remaining;  // work left in the current attempt
  double rate;       // instantaneous service rate
};

class Simulator {
 public:
  explicit Simulator(const SimConfig& cfg)
      : Simulator(cfg, FailureTimeline(cfg.failure, cfg.start_mode,
                                       RngStream(cfg.master_seed, streams::kFailures))) {}

  Simulator(const SimConfig& cfg, FailureTimeline timeline)
      : cfg_(cfg), timeline_(std::move(timeline)),
        arrival_stream_(cfg.master_seed, streams::kArrivals),
        size_stream_(cfg.master_seed, streams::kJobSizes),
        class_stream_(cfg.master_seed, streams::kJobClasses) {
    cfg_.validate();
    clock_ = timeline_.last_failure_time();
    for (const auto& j : cfg_.initial_jobs) admit(j.size, j.job_class);
    if (cfg_.arrival) next_arrival_ = clock_ + next_interarrival(*cfg_.arrival, arrival_stream_);
    record_trace(true);
  }

  // Processes one event. Returns false once the run is over.
  bool step() {
    if (finished_) return false;
    if (!cfg_.arrival && in_system_.empty()) return finish();
    if (cfg_.event_cap && out_.counters.events >= cfg_.event_cap) {
      out_.truncated = true;
      return finish();
    }

    const double tf = timeline_.next_failure_time();
    const double ta = next_arrival_;
    const auto completion = next_completion(tf);
    const double tc = completion ? completion->time : kInf;
    const double t = std::min({tf, ta, tc});

    if (t > cfg_.horizon) {
      advance_to(cfg_.horizon);
      last_event_ = EventKind::Horizon;
      return finish();
    }
    if (!std::isfinite(t)) throw RuntimeError("simulation stalled: no future event");

    // Ties: failure, then completion, then arrival.
    if (tf <= tc && tf <= ta) {
      advance_to(tf);
      on_failure();
    } else if (tc <= ta) {
      advance_to(tc);
      on_completion(completion->id);
    } else {
      advance_to(ta);
      on_arrival();
    }
    ++out_.counters.events;
    record_trace(false);
    return true;
  }

  SimOutput run() {
    while (step()) {
    }
    return out_;
  }

  const SimOutput& output() const { return out_; }
  SimOutput take_output() { return std::move(out_); }
  double clock() const { return clock_; }
  EventKind last_event() const { return last_event_; }
  bool idle() const { return idle_; }
  std::size_t queue_size() const { return in_system_.size(); }
  const FailureTimeline& timeline() const { return timeline_; }

  std::vector<JobView> snapshot() const {
    std::vector<JobView> out;
    out.reserve(in_system_.size());
    for (const auto& [id, job] : in_system_) {
      JobView v{id, job.job_class, job.size, job.size, 0.0};
      if (cfg_.policy.sharing()) {
        const double entry = job.fresh ? job.entry_v : 0.0;
        v.remaining = job.size - job.weight * (v_ - entry);
        v.rate = idle_ ? 0.0 : job.weight / total_weight_;
      } else if (!fifo_.empty() && fifo_.front() == id) {
        v.remaining = idle_ ? job.size : job.size - (clock_ - head_start_);
        v.rate = idle_ ? 0.0 : 1.0;
      }
      out.push_back(v);
    }
    std::sort(out.begin(), out.end(), [](const JobView& a, const JobView& b) { return a.id < b.id; });
    return out;
  }

 private:
  struct Job {
    std::size_t job_class;
    double size;
    double arrival;
    double weight;
    double entry_v;                   // sharing: V at entry, valid while fresh
    bool fresh;                       // sharing: arrived after the last failure
    std::uint64_t failures_at_entry;  // sharing: for restart counting
    std::uint64_t attempts;           // FCFS: attempts so far
  };
  using Key = std::pair<double, std::uint64_t>;

  static constexpr double kCompletionTol = 1e-12;

  bool finish() {
    finished_ = true;
    out_.final_queue = in_system_.size();
    out_.end_time = clock_;
    record_trace(true);
    return false;
  }

  void record_trace(bool force) {
    auto& tr = out_.trajectory;
    if (!force && cfg_.trace_stride > 0.0 && !tr.empty() && clock_ - tr.back().t < cfg_.trace_stride)
      return;
    TracePoint p{clock_, in_system_.size(), out_.counters.departures, out_.counters.drops,
                 out_.counters.arrivals};
    if (!tr.empty() && tr.back() == p) return;
    tr.push_back(p);
  }

  bool serving() const { return !idle_ && !in_system_.empty(); }

  void advance_to(double t) {
    const double dt = t - clock_;
    if (dt > 0.0 && serving()) {
      out_.counters.busy_time += dt;
      if (cfg_.policy.sharing()) v_ += dt / total_weight_;
    }
    clock_ = t;
  }

  // Earliest completion time, provided it beats the next failure at tf with
  // margin. A job that would reach its size exactly at a failure instant
  // restarts instead.
  struct Completion {
    double time;
    std::uint64_t id;
  };

  std::optional<Completion> next_completion(double tf) const {
    if (!serving()) return std::nullopt;
    if (cfg_.policy.sharing()) {
      double tag = kInf;
      std::uint64_t id = 0;
      if (!settled_.empty()) std::tie(tag, id) = *settled_.begin();
      if (!fresh_.empty() && fresh_.begin()->first < tag) std::tie(tag, id) = *fresh_.begin();
      const Job& job = in_system_.at(id);
      const double tc = clock_ + std::max(tag - v_, 0.0) * total_weight_;
      const double slack = job.weight * ((tf - clock_) / total_weight_ - (tag - v_));
      if (tc < tf && slack > kCompletionTol * job.size) return Completion{tc, id};
      return std::nullopt;
    }
    const Job& head = in_system_.at(fifo_.front());
    const double tc = std::max(head_start_ + head.size, clock_);
    if (tc < tf && (tf - head_start_ - head.size) > kCompletionTol * head.size)
      return Completion{tc, fifo_.front()};
    return std::nullopt;
  }

  void admit(double size, std::size_t job_class) {
    const std::uint64_t id = next_id_++;
    Job job{job_class, size, clock_, cfg_.policy.weight(job_class), v_, true,
            out_.counters.failures, 1};
    if (cfg_.policy.sharing()) {
      total_weight_ += job.weight;
      fresh_.insert({v_ + size / job.weight, id});
    } else {
      if (fifo_.empty()) head_start_ = clock_;
      fifo_.push_back(id);
    }
    in_system_.emplace(id, job);
  }

  void on_arrival() {
    last_event_ = EventKind::Arrival;
    const JobDraw draw = draw_job(cfg_.jobs, size_stream_, class_stream_);
    auto offer = [&](double size) {
      ++out_.counters.arrivals;
      if (cfg_.queue_cap && in_system_.size() >= *cfg_.queue_cap) {
        ++out_.counters.drops;
        return;
      }
      admit(size, draw.job_class);
    };
    if (cfg_.fragment_payload) {
      for (double piece : fragment_job(draw.size, *cfg_.fragment_payload, cfg_.jobs.header)) offer(piece);
    } else {
      offer(draw.size);
    }
    next_arrival_ = clock_ + next_interarrival(*cfg_.arrival, arrival_stream_);
  }

  void on_failure() {
    last_event_ = EventKind::Failure;
    timeline_.advance_to_next_failure();
    const bool was_serving = serving();
    ++out_.counters.failures;
    idle_ = false;
    if (cfg_.policy.sharing()) {
      // Every job in the system restarts now, so virtual time is re-based to
      // zero; this keeps tags small and their rounding error negligible.
      v_ = 0.0;
      for (const auto& [tag, id] : fresh_) {
        Job& job = in_system_.at(id);
        job.fresh = false;
        settled_.insert({job.size / job.weight, id});
      }
      fresh_.clear();
    } else if (!fifo_.empty()) {
      if (was_serving && clock_ > head_start_) ++in_system_.at(fifo_.front()).attempts;
      head_start_ = clock_;
    }
  }

  void on_completion(std::uint64_t scheduled) {
    last_event_ = EventKind::Completion;
    if (!cfg_.policy.sharing()) {
      fifo_.pop_front();
      depart(scheduled, in_system_.at(scheduled).attempts);
      head_start_ = clock_;
      if (cfg_.policy.idles()) idle_ = true;
      return;
    }
    // The scheduled job departs; so does every other job whose remaining
    // work is within tolerance, all in id order.
    const Job& first = in_system_.at(scheduled);
    v_ = std::max(v_, first.fresh ? first.entry_v + first.size / first.weight
                                  : first.size / first.weight);
    std::vector<std::pair<std::uint64_t, bool>> done;  // (id, was fresh)
    for (const auto& [s, id] : settled_) {
      if (id != scheduled && s - v_ > kCompletionTol * s) break;
      done.emplace_back(id, false);
    }
    for (const auto& [tag, id] : fresh_) {
      const Job& job = in_system_.at(id);
      if (id != scheduled && tag - v_ > kCompletionTol * job.size / job.weight) break;
      done.emplace_back(id, true);
    }
    std::sort(done.begin(), done.end());
    if (cfg_.policy.idles()) done.resize(1);
    for (const auto& [id, was_fresh] : done) {
      const Job& job = in_system_.at(id);
      if (was_fresh)
        fresh_.erase({job.entry_v + job.size / job.weight, id});
      else
        settled_.erase({job.size / job.weight, id});
      total_weight_ -= job.weight;
      depart(id, 1 + out_.counters.failures - job.failures_at_entry);
    }
    if (in_system_.empty()) total_weight_ = 0.0;  // drop accumulated rounding
    if (cfg_.policy.idles()) idle_ = true;
  }

  void depart(std::uint64_t id, std::uint64_t attempts) {
    const Job& job = in_system_.at(id);
    auto& c = out_.counters;
    ++c.departures;
    c.last_departure_time = clock_;
    c.useful_work_done += job.size - cfg_.jobs.header;
    if (cfg_.record_jobs)
      out_.jobs.push_back({id, job.job_class, job.size, job.arrival, clock_, attempts});
    in_system_.erase(id);
  }

  SimConfig cfg_;
  FailureTimeline timeline_;
  RngStream arrival_stream_;
  RngStream size_stream_;
  RngStream class_stream_;

  SimOutput out_;
  double clock_ = 0.0;
  double next_arrival_ = kInf;
  bool idle_ = false;
  bool finished_ = false;
  EventKind last_event_ = EventKind::Start;
  std::uint64_t next_id_ = 0;
  std::unordered_map<std::uint64_t, Job> in_system_;

  // Sharing policies.
  double v_ = 0.0;
  double total_weight_ = 0.0;
  std::set<Key> settled_;  // (size / weight, id); V restarts at 0 on each failure
  std::set<Key> fresh_;    // (entry_v + size / weight, id)

  // FCFS policies.
  std::deque<std::uint64_t> fifo_;
  double head_start_ = 0.0;
};

inline SimOutput simulate(const SimConfig& cfg) {
  if (!cfg.arrival) throw ConfigError("arrival rate required");
  return Simulator(cfg).run();
}

// ---------------------------------------------------------------------------
// Transient runs: a fixed batch of jobs, no arrivals.

struct TransientJob {
  std::uint64_t id;
  double size;
  double completion;       // S_i measured from time 0
  std::uint64_t attempts;  // N_i
  std::size_t order;       // 0-based departure position
};

struct TransientResult {
  double theta = 0.0;  // time of the last departure
  std::vector<TransientJob> jobs;
  std::vector<double> departure_sizes;
  std::uint64_t failures = 0;
  bool truncated = false;
};

inline TransientResult transient_completion(const std::vector<InitialJob>& initial, const Policy& policy,
                                            FailureTimeline timeline, std::uint64_t event_cap = 0) {
  if (initial.empty()) throw ConfigError("transient run needs at least one job");
  SimConfig cfg;
  cfg.initial_jobs = initial;
  cfg.policy = policy;
  cfg.failure = timeline.spec();
  cfg.event_cap = event_cap;
  cfg.trace_stride = kInf;
  Simulator sim(cfg, std::move(timeline));
  const SimOutput out = sim.run();

  TransientResult r;
  r.truncated = out.truncated;
  r.failures = out.counters.failures;
  r.theta = out.counters.last_departure_time;
  for (std::size_t k = 0; k < out.jobs.size(); ++k) {
    const auto& j = out.jobs[k];
    r.jobs.push_back({j.id, j.size, j.departure, j.attempts, k});
    r.departure_sizes.push_back(j.size);
  }
  return r;
}

inline TransientResult transient_completion(const std::vector<double>& sizes, const Policy& policy,
                                            FailureTimeline timeline, std::uint64_t event_cap = 0) {
  std::vector<InitialJob> jobs;
  for (double s : sizes) jobs.push_back({s, 0});
  return transient_completion(jobs, policy, std::move(timeline), event_cap);
}

// ---------------------------------------------------------------------------
// A single job served alone.

struct SingleJobService {
  std::uint64_t attempts;  // N: index of the first period longer than the job
  double service;          // S: wasted periods plus the job itself
  double service_bar;      // S-bar: wasted periods plus the whole final period
};

inline SingleJobService single_job_service(double size, FailureTimeline& timeline) {
  if (!(size > 0.0)) throw ConfigError("job size must be > 0");
  double elapsed = 0.0;
  double start = timeline.last_failure_time();
  for (std::uint64_t n = 1;; ++n) {
    const double window = timeline.next_failure_time() - start;
    if (window > size) {
      const SingleJobService out{n, elapsed + size, elapsed + window};
      timeline.advance_to_next_failure();
      return out;
    }
    elapsed += window;
    timeline.advance_to_next_failure();
    start = timeline.last_failure_time();
  }
}

// ---------------------------------------------------------------------------
// Coupling of each policy with its idle variant on one failure path.

// A run that hits the event cap reports the time it was cut off, which is
// a lower bound on its completion time, and sets its *_cut flag.
struct CoupledBound {
  double fcfs = 0.0;           // Theta_m under FCFS
  double fcfs_idle = 0.0;      // completion time of the FCFS_IDLE system
  double fcfs_idle_sum = 0.0;  // sum of S-bar_i, i.e. the failure after that completion
  double ps = 0.0;
  double ps_idle = 0.0;
  double ps_idle_sum = 0.0;
  bool fcfs_cut = false, fcfs_idle_cut = false, ps_cut = false, ps_idle_cut = false;
  bool truncated = false;  // any run cut off
};

// Runs FCFS / FCFS_IDLE and PS / PS_IDLE on the same failure path: the given
// gaps first, then draws from `tail` on copies of one stream, so every run
// sees the identical extension.
inline CoupledBound coupled_idle_bound(const std::vector<double>& sizes, const std::vector<double>& gaps,
                                       const DistSpec& tail, const RngStream& stream,
                                       std::uint64_t event_cap = 0) {
  auto run = [&](const Policy& p, double* idle_sum) {
    std::vector<InitialJob> jobs;
    for (double s : sizes) jobs.push_back({s, 0});
    SimConfig cfg;
    cfg.initial_jobs = jobs;
    cfg.policy = p;
    cfg.failure = tail;
    cfg.event_cap = event_cap;
    cfg.trace_stride = kInf;
    cfg.record_jobs = false;
    Simulator sim(cfg, FailureTimeline::scripted(gaps, tail, stream));
    const SimOutput out = sim.run();
    if (idle_sum) *idle_sum = out.truncated ? out.end_time : sim.timeline().next_failure_time();
    return std::pair{out.truncated ? out.end_time : out.counters.last_departure_time, out.truncated};
  };
  CoupledBound b;
  std::tie(b.fcfs, b.fcfs_cut) = run(Policy::fcfs(), nullptr);
  std::tie(b.fcfs_idle, b.fcfs_idle_cut) = run(Policy::fcfs_idle(), &b.fcfs_idle_sum);
  std::tie(b.ps, b.ps_cut) = run(Policy::ps(), nullptr);
  std::tie(b.ps_idle, b.ps_idle_cut) = run(Policy::ps_idle(), &b.ps_idle_sum);
  b.truncated = b.fcfs_cut || b.fcfs_idle_cut || b.ps_cut || b.ps_idle_cut;
  return b;
}

}  // namespace restartq
