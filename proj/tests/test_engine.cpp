#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "restartq/engine.hpp"

using namespace restartq;

namespace {

FailureTimeline gaps(std::vector<double> g, double tail = 1e9) {
  return FailureTimeline::scripted(std::move(g), DistSpec::deterministic(tail), RngStream(1, streams::kFailures));
}

// Straightforward sharing simulator: every job keeps its remaining work and
// is decremented at each event. Same random streams as the engine.
struct NaiveJob {
  std::uint64_t id;
  double size, rem, weight;
};

struct NaiveResult {
  std::map<std::uint64_t, double> departures;  // id -> time
  std::size_t final_queue = 0;
};

NaiveResult naive_sharing(const SimConfig& cfg) {
  FailureTimeline tl(cfg.failure, StartMode::Fresh, RngStream(cfg.master_seed, streams::kFailures));
  RngStream arr(cfg.master_seed, streams::kArrivals), sz(cfg.master_seed, streams::kJobSizes),
      cls(cfg.master_seed, streams::kJobClasses);
  NaiveResult res;
  std::vector<NaiveJob> jobs;
  std::uint64_t next_id = 0;
  double t = 0.0, ta = next_interarrival(*cfg.arrival, arr);
  for (;;) {
    double w = 0.0;
    for (const auto& j : jobs) w += j.weight;
    double tc = kInf;
    for (const auto& j : jobs) tc = std::min(tc, t + j.rem * w / j.weight);
    const double tf = tl.next_failure_time();
    const double tn = std::min({ta, tf, tc});
    if (tn > cfg.horizon) break;
    for (auto& j : jobs) j.rem -= (tn - t) * j.weight / w;
    t = tn;
    if (tf <= tc && tf <= ta) {
      for (auto& j : jobs) j.rem = j.size;
      tl.advance_to_next_failure();
    } else if (tc <= ta) {
      std::vector<NaiveJob> keep;
      for (const auto& j : jobs) {
        if (j.rem <= 1e-9 * j.size) res.departures[j.id] = t;
        else keep.push_back(j);
      }
      jobs.swap(keep);
    } else {
      const auto d = draw_job(cfg.jobs, sz, cls);
      jobs.push_back({next_id++, d.size, d.size, cfg.policy.weight(d.job_class)});
      ta = t + next_interarrival(*cfg.arrival, arr);
    }
  }
  res.final_queue = jobs.size();
  return res;
}

SimConfig sharing_config(Policy p, std::uint64_t seed) {
  SimConfig c;
  c.arrival = ArrivalSpec::poisson(0.3);
  c.jobs.size = DistSpec::exponential(2.0);
  c.failure = DistSpec::exponential(0.2);
  c.policy = std::move(p);
  c.horizon = 5000.0;
  c.master_seed = seed;
  return c;
}

}  // namespace

TEST(Engine, FcfsDeterministicHandTrace) {
  SimConfig c;
  c.arrival = ArrivalSpec::poisson(0.1);
  c.jobs.size = DistSpec::deterministic(1.0);
  c.failure = DistSpec::deterministic(5.0);
  c.policy = Policy::fcfs();
  c.horizon = 1000.0;
  c.master_seed = 3;
  const auto out = simulate(c);
  ASSERT_GT(out.jobs.size(), 50u);
  // Hand rule: service starts at max(arrival, previous departure); if the
  // unit of work would reach the next failure f (at or after it), the job
  // restarts at f and finishes at f + 1.
  double prev = 0.0;
  std::uint64_t prev_id = 0;
  bool first = true;
  for (const auto& j : out.jobs) {
    if (!first) {
      EXPECT_GT(j.id, prev_id);
    }
    const double start = std::max(j.arrival, prev);
    const double f = (std::floor(start / 5.0) + 1.0) * 5.0;
    const bool straddles = start + 1.0 >= f;
    EXPECT_NEAR(j.departure, straddles ? f + 1.0 : start + 1.0, 1e-9);
    EXPECT_EQ(j.attempts, straddles ? 2u : 1u);
    prev = j.departure;
    prev_id = j.id;
    first = false;
  }
}

TEST(Engine, SharingMatchesNaiveSimulator) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (const Policy& p : {Policy::ps(), Policy::dps({1.0, 4.0})}) {
      SimConfig c = sharing_config(p, seed);
      if (p.kind == PolicyKind::DPS) c.jobs.class_probs = {0.5, 0.5};
      const auto out = simulate(c);
      const auto ref = naive_sharing(c);
      ASSERT_EQ(out.jobs.size(), ref.departures.size()) << policy_name(p.kind) << " seed " << seed;
      EXPECT_EQ(out.final_queue, ref.final_queue);
      for (const auto& j : out.jobs) {
        ASSERT_TRUE(ref.departures.count(j.id)) << "job " << j.id;
        EXPECT_NEAR(j.departure, ref.departures.at(j.id), 1e-7 * std::max(1.0, j.departure));
      }
    }
  }
}

TEST(Engine, DeterministicPsMatchesNaiveCounts) {
  SimConfig c;
  c.arrival = ArrivalSpec::poisson(0.1);
  c.jobs.size = DistSpec::deterministic(2.0);
  c.failure = DistSpec::exponential(0.05);
  c.policy = Policy::ps();
  c.horizon = 20000.0;
  for (std::uint64_t seed : {5, 6}) {
    c.master_seed = seed;
    const auto out = simulate(c);
    const auto ref = naive_sharing(c);
    EXPECT_EQ(out.counters.departures, ref.departures.size());
    EXPECT_EQ(out.final_queue, ref.final_queue);
  }
}

TEST(Engine, TransientExamples) {
  // One job: every policy gives the same time.
  std::vector<double> thetas;
  for (const Policy& p : {Policy::fcfs(), Policy::fcfs_idle(), Policy::ps(), Policy::ps_idle()})
    thetas.push_back(transient_completion(std::vector<double>{1.0}, p, gaps({0.5, 0.7, 3.0})).theta);
  for (double t : thetas) EXPECT_DOUBLE_EQ(t, 0.5 + 0.7 + 1.0);

  const auto ps = transient_completion(std::vector<double>{1.0, 2.0}, Policy::ps(), gaps({10.0}));
  EXPECT_DOUBLE_EQ(ps.theta, 3.0);
  ASSERT_EQ(ps.jobs.size(), 2u);
  EXPECT_DOUBLE_EQ(ps.jobs[0].completion, 2.0);
  EXPECT_DOUBLE_EQ(ps.jobs[1].completion, 3.0);

  const auto f = transient_completion(std::vector<double>{1.0, 1.0}, Policy::fcfs(), gaps({1.5, 10.0}));
  EXPECT_DOUBLE_EQ(f.theta, 2.5);
  EXPECT_DOUBLE_EQ(f.jobs[0].completion, 1.0);
  EXPECT_EQ(f.jobs[0].attempts, 1u);
  EXPECT_EQ(f.jobs[1].attempts, 2u);

  const auto p = transient_completion(std::vector<double>{1.0, 1.0}, Policy::ps(), gaps({1.5, 10.0}));
  EXPECT_DOUBLE_EQ(p.theta, 3.5);
  for (const auto& j : p.jobs) {
    EXPECT_DOUBLE_EQ(j.completion, 3.5);
    EXPECT_EQ(j.attempts, 2u);
  }
}

TEST(Engine, CompletionExactlyAtFailureRestarts) {
  for (const Policy& p : {Policy::fcfs(), Policy::ps()}) {
    const auto r = transient_completion(std::vector<double>{1.0}, p, gaps({1.0, 3.0}));
    EXPECT_DOUBLE_EQ(r.theta, 2.0) << policy_name(p.kind);
    EXPECT_EQ(r.jobs[0].attempts, 2u);
  }
  // Two PS jobs of size 1 each need 2 time units together.
  const auto r = transient_completion(std::vector<double>{1.0, 1.0}, Policy::ps(), gaps({2.0, 5.0}));
  EXPECT_DOUBLE_EQ(r.theta, 4.0);
}

TEST(Engine, SingleJobServiceExamples) {
  auto a = gaps({0.5, 2.0});
  const auto s = single_job_service(1.0, a);
  EXPECT_EQ(s.attempts, 2u);
  EXPECT_DOUBLE_EQ(s.service, 1.5);
  EXPECT_DOUBLE_EQ(s.service_bar, 2.5);
  auto b = gaps({2.0});
  const auto t = single_job_service(1.0, b);
  EXPECT_EQ(t.attempts, 1u);
  EXPECT_DOUBLE_EQ(t.service, 1.0);
  EXPECT_DOUBLE_EQ(t.service_bar, 2.0);
  auto c = gaps({1.0, 1.5});
  EXPECT_EQ(single_job_service(1.0, c).attempts, 2u);
}

TEST(Engine, SingleJobServiceMean) {
  FailureTimeline tl(DistSpec::exponential(0.05), StartMode::Fresh, RngStream(17, 4));
  double sum = 0.0, sum_bar = 0.0;
  const int n = 1'000'000;
  for (int k = 0; k < n; ++k) {
    const auto r = single_job_service(1.0, tl);
    EXPECT_LE(r.service, r.service_bar);
    sum += r.service;
    sum_bar += r.service_bar;
  }
  EXPECT_NEAR(sum / n, std::expm1(0.05) / 0.05, 0.01 * 1.0254);
}

TEST(Engine, CoupledBoundExamples) {
  const auto b = coupled_idle_bound({1.0, 1.0}, {2.5, 10.0}, DistSpec::deterministic(10.0), RngStream(1, 4));
  EXPECT_DOUBLE_EQ(b.fcfs, 2.0);
  EXPECT_DOUBLE_EQ(b.fcfs_idle, 3.5);
  EXPECT_DOUBLE_EQ(b.fcfs_idle_sum, 12.5);
  EXPECT_LE(b.fcfs, b.fcfs_idle);
  EXPECT_LE(b.ps, b.ps_idle_sum);

  const auto one = coupled_idle_bound({1.0}, {0.5, 3.0}, DistSpec::deterministic(10.0), RngStream(1, 4));
  EXPECT_DOUBLE_EQ(one.fcfs, one.fcfs_idle);
  EXPECT_DOUBLE_EQ(one.fcfs, 1.5);
  EXPECT_DOUBLE_EQ(one.ps, one.ps_idle);
}

TEST(Engine, CoupledBoundHoldsOnRandomPaths) {
  const DistSpec failure = DistSpec::weibull(1.6926, 2.0);
  const DistSpec job = DistSpec::weibull(1.6926 / 2.0, 2.0);
  RngStream sizes(31, 2);
  for (std::uint64_t k = 0; k < 2000; ++k) {
    std::vector<double> batch(5);
    for (auto& b : batch) b = sample(job, sizes);
    const auto r = coupled_idle_bound(batch, {}, failure, RngStream(derive_seed(31, k), 4), 10'000'000);
    ASSERT_FALSE(r.truncated);
    ASSERT_LE(r.fcfs, r.fcfs_idle) << "path " << k;
    ASSERT_LE(r.ps, r.ps_idle_sum) << "path " << k;
  }
}

TEST(Engine, PsTransientDepartsInSizeOrder) {
  RngStream sizes(41, 2);
  for (std::uint64_t k = 0; k < 200; ++k) {
    std::vector<double> batch(6);
    for (auto& b : batch) b = sample(DistSpec::exponential(1.0), sizes);
    const auto r = transient_completion(
        batch, Policy::ps(), FailureTimeline(DistSpec::exponential(0.3), StartMode::Fresh, RngStream(k, 4)));
    ASSERT_FALSE(r.truncated);
    for (std::size_t i = 1; i < r.departure_sizes.size(); ++i)
      EXPECT_LE(r.departure_sizes[i - 1], r.departure_sizes[i]);
    EXPECT_DOUBLE_EQ(r.theta, std::max_element(r.jobs.begin(), r.jobs.end(), [](auto& a, auto& b) {
                                return a.completion < b.completion;
                              })->completion);
  }
}

TEST(Engine, WorkConservationResetsAndRates) {
  for (const Policy& p : {Policy::fcfs(), Policy::ps(), Policy::dps({1.0, 4.0})}) {
    SimConfig c = sharing_config(p, 9);
    c.jobs.class_probs = {0.5, 0.5};
    c.horizon = 2000.0;
    Simulator sim(c);
    auto before = sim.snapshot();
    double t0 = sim.clock();
    while (sim.step()) {
      const auto after = sim.snapshot();
      const double dt = sim.clock() - t0;
      if (sim.last_event() == EventKind::Failure) {
        for (const auto& j : after) EXPECT_EQ(j.remaining, j.size);
      } else if (!before.empty() && dt > 0.0) {
        std::map<std::uint64_t, double> rem_after;
        for (const auto& j : after) rem_after[j.id] = j.remaining;
        double served = 0.0;
        for (const auto& j : before) served += j.remaining - (rem_after.count(j.id) ? rem_after[j.id] : 0.0);
        EXPECT_NEAR(served, dt, 1e-9 * std::max(1.0, dt)) << policy_name(p.kind);
      }
      if (!after.empty() && !sim.idle()) {
        double total = 0.0, weight = 0.0;
        for (const auto& j : after) weight += p.weight(j.job_class);
        for (const auto& j : after) {
          total += j.rate;
          if (p.sharing()) {
            EXPECT_NEAR(j.rate, p.weight(j.job_class) / weight, 1e-12);
          }
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
      before = after;
      t0 = sim.clock();
    }
  }
}

TEST(Engine, TraceCountsAreConsistent) {
  SimConfig c = sharing_config(Policy::ps(), 12);
  c.queue_cap = 3;
  const auto out = simulate(c);
  EXPECT_GT(out.counters.drops, 0u);
  std::uint64_t prev_d = 0;
  for (const auto& p : out.trajectory) {
    EXPECT_LE(p.queue, 3u);
    EXPECT_EQ(p.queue, p.arrivals - p.departures - p.drops);
    EXPECT_GE(p.departures, prev_d);
    prev_d = p.departures;
  }
  EXPECT_EQ(out.final_queue, out.counters.arrivals - out.counters.departures - out.counters.drops);
}

TEST(Engine, SameSeedSameOutput) {
  SimConfig c = sharing_config(Policy::ps(), 21);
  EXPECT_EQ(simulate(c), simulate(c));
  SimConfig d = c;
  d.master_seed = 22;
  EXPECT_NE(simulate(c).counters, simulate(d).counters);
}

TEST(Engine, FragmentsArriveTogether) {
  SimConfig c;
  c.arrival = ArrivalSpec::poisson(0.01);
  c.jobs.size = DistSpec::deterministic(2.0);
  c.fragment_payload = 0.5;
  c.failure = DistSpec::exponential(0.001);
  c.policy = Policy::fcfs();
  c.horizon = 10000.0;
  const auto out = simulate(c);
  EXPECT_EQ(out.counters.arrivals % 4, 0u);
  for (const auto& j : out.jobs) EXPECT_EQ(j.size, 0.5);
}

TEST(Engine, ConfigContract) {
  SimConfig c;
  c.horizon = 10.0;
  EXPECT_THROW(simulate(c), ConfigError);  // no arrival spec
  c.arrival = ArrivalSpec::poisson(1.0);
  c.policy = Policy::ps_idle();
  EXPECT_THROW(simulate(c), ConfigError);  // idle variants are transient-only
  c.policy = Policy::dps({1.0});
  c.jobs.class_probs = {0.5, 0.5};
  EXPECT_THROW(simulate(c), ConfigError);  // class without a weight
  EXPECT_THROW(Policy::dps({1.0, 0.0}), ConfigError);
  c.policy = Policy::fcfs();
  c.jobs.class_probs = {1.0};
  c.horizon = -1.0;
  EXPECT_THROW(simulate(c), ConfigError);
  EXPECT_THROW(ArrivalSpec::poisson(0.0), ConfigError);
}

TEST(Engine, EventCapFlagsTruncation) {
  // Five PS jobs of size 3 against gaps of 2: no job can ever finish.
  const auto r = transient_completion(std::vector<double>(5, 3.0), Policy::ps(),
                                      FailureTimeline(DistSpec::deterministic(2.0), StartMode::Fresh, RngStream(1, 4)),
                                      1000);
  EXPECT_TRUE(r.truncated);
  EXPECT_LT(r.jobs.size(), 5u);
}
