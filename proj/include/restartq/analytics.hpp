// analytics.hpp - closed-form results for restart systems and estimators
// applied to simulation output.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/binomial.hpp>

#include "restartq/distributions.hpp"
#include "restartq/engine.hpp"
#include "restartq/errors.hpp"
#include "restartq/numerics.hpp"

namespace restartq {

class InfiniteRestartsError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

// ---------------------------------------------------------------------------
// Serving one job at a time.

// E[N] = 1 / P(A > size) for a job of fixed size.
inline double expected_restarts(const DistSpec& failure, double size) {
  if (!(size > 0.0)) throw ConfigError("job size must be > 0");
  const double g = ccdf(failure, size);
  if (!(g > 0.0))
    throw InfiniteRestartsError("no availability period exceeds the job size: restarts never end");
  return 1.0 / g;
}

struct RestartExpectation {
  double value = kInf;
  bool finite = false;
  std::string diagnostic;
};

// E[N] = E[1 / P(A > B)] over the job law. The integral is accumulated over
// the job law's tail decades (CCDF levels 10^-1, 10^-2, ...). Geometric decay
// of the per-decade increments means convergence; increments that stop
// shrinking mean E[N] is infinite.
inline RestartExpectation expected_restarts_random_job(const DistSpec& failure, const DistSpec& job) {
  RestartExpectation out;
  if (job.family() == Family::Deterministic) {
    const double g = ccdf(failure, job.as<Deterministic>().value);
    if (g > 0.0) {
      out.value = 1.0 / g;
      out.finite = true;
    } else {
      out.diagnostic = "job size exceeds every availability period";
    }
    return out;
  }
  auto integrand = [&](double x) {
    const double p = pdf(job, x);
    if (!(p > 0.0)) return 0.0;
    return std::exp(std::log(p) - log_ccdf(failure, x));
  };
  double lo = job.family() == Family::Pareto ? job.as<Pareto>().scale
              : job.family() == Family::Uniform ? job.as<Uniform>().lower
                                                : 0.0;
  double total = 0.0;
  double prev_inc = kInf;
  int flat_run = 0;
  std::vector<double> inner_breaks;
  for (double tail : {1.0 - 1e-6, 1.0 - 1e-3, 0.5}) inner_breaks.push_back(quantile_ccdf(job, tail));
  for (int k = 1; k <= 300; ++k) {
    const double hi = job.family() == Family::Uniform && k == 1 ? job.as<Uniform>().upper
                                                                : quantile_ccdf(job, std::pow(10.0, -k));
    const double inc = numerics::integrate(integrand, lo, hi, k == 1 ? inner_breaks : std::vector<double>{}, 1e-11);
    if (!std::isfinite(inc)) {
      out.diagnostic = "integrand overflow: E[1/P(A > B)] diverges";
      return out;
    }
    total += inc;
    lo = hi;
    if (job.family() == Family::Uniform) {
      out.value = total;
      out.finite = std::isfinite(total);
      if (!out.finite) out.diagnostic = "E[1/P(A > B)] diverges";
      return out;
    }
    const double ratio = prev_inc > 0.0 && std::isfinite(prev_inc) ? inc / prev_inc : 0.0;
    flat_run = ratio >= 0.999 ? flat_run + 1 : 0;
    if (flat_run >= 5) {
      out.diagnostic = "per-decade contributions do not decay: E[1/P(A > B)] diverges";
      return out;
    }
    if (k >= 3 && ratio < 0.999 && inc * ratio / (1.0 - ratio) < 1e-10 * total) {
      out.value = total;
      out.finite = true;
      return out;
    }
    prev_inc = inc;
  }
  out.diagnostic = "no convergence within 300 tail decades: E[1/P(A > B)] treated as infinite";
  return out;
}

// E[S] = E[A 1{A < size}] E[N] + size for a job of fixed size.
inline double expected_service_fixed(const DistSpec& failure, double size) {
  return truncated_mean_below(failure, size) * expected_restarts(failure, size) + size;
}

struct StabilityReport {
  double rho;                // lambda E[S]
  double threshold;          // largest stable arrival rate, 1 / E[S]
  double expected_service;   // E[S]
  bool stable;               // rho < 1
};

inline StabilityReport fcfs_stability(double arrival_rate, const DistSpec& failure, double size) {
  if (!(arrival_rate > 0.0)) throw ConfigError("arrival rate must be > 0");
  const double es = expected_service_fixed(failure, size);
  const double rho = arrival_rate * es;
  return {rho, 1.0 / es, es, rho < 1.0};
}

// ---------------------------------------------------------------------------
// Bounded PS queue with exponential failures.

struct ThroughputBound {
  double raw;      // Q / (lambda E[S_Q])
  double clamped;  // min(1, raw)
};

// Throughput floor of a full queue: Q jobs leave every E[S] of a job of size
// Q * size, i.e. E[S] = (e^{mu Q size} - 1) / mu.
inline ThroughputBound throughput_lower_bound(double arrival_rate, double failure_rate, double size,
                                              std::uint64_t queue_cap) {
  if (!(arrival_rate > 0.0 && failure_rate > 0.0 && size > 0.0 && queue_cap >= 1))
    throw ConfigError("throughput bound: parameters must be > 0");
  const double q = static_cast<double>(queue_cap);
  const double raw = q / (arrival_rate / failure_rate * std::expm1(failure_rate * q * size));
  return {raw, std::min(1.0, raw)};
}

// Size above which the full-queue throughput floor drops below one.
inline double critical_job_size(double arrival_rate, double failure_rate, std::uint64_t queue_cap) {
  if (!(arrival_rate > 0.0 && failure_rate > 0.0 && queue_cap >= 1))
    throw ConfigError("critical size: parameters must be > 0");
  const double mq = failure_rate * static_cast<double>(queue_cap);
  return std::log1p(mq / arrival_rate) / mq;
}

// ---------------------------------------------------------------------------
// Order statistics and tail indices.

// P(B_(i) > x) given p = P(B > x): the i-th smallest of m exceeds x iff at
// most i - 1 of the m draws are <= x.
inline double order_statistic_ccdf_at(double tail, unsigned m, unsigned i) {
  if (m < 1 || i < 1 || i > m) throw ConfigError("order statistic: need 1 <= i <= m");
  double sum = 0.0;
  for (unsigned k = 0; k < i; ++k)
    sum += boost::math::binomial_coefficient<double>(m, k) * std::pow(1.0 - tail, k) *
           std::pow(tail, static_cast<double>(m - k));
  return std::clamp(sum, 0.0, 1.0);
}

inline double order_statistic_ccdf(const DistSpec& job, unsigned m, unsigned i, double x) {
  return order_statistic_ccdf_at(ccdf(job, x), m, i);
}

// Power-law index of the total completion time of m jobs. One-at-a-time
// service keeps the single-job index alpha; processor sharing divides it by
// m^(gamma - 1) when the job hazard grows faster than linearly.
inline double theoretical_tail_index(double alpha, double gamma, unsigned m, PolicyKind policy) {
  if (!(alpha > 1.0) || !(gamma >= 0.0) || m < 1) throw ConfigError("tail index: need alpha > 1, gamma >= 0, m >= 1");
  switch (policy) {
    case PolicyKind::FCFS:
    case PolicyKind::FCFS_IDLE:
      return alpha;
    case PolicyKind::PS:
    case PolicyKind::PS_IDLE:
      return gamma <= 1.0 ? alpha : alpha / std::pow(static_cast<double>(m), gamma - 1.0);
    case PolicyKind::DPS:
      break;
  }
  throw ConfigError("tail index: no result for dps");
}

struct TailWindow {
  double lower = 0.90;
  double upper = 0.999;
};

struct TailEstimate {
  double slope;   // about -alpha
  double std_error;
  TailWindow window;
  std::size_t sample_count;
  std::size_t points;  // distinct points inside the window
};

// Empirical CCDF at the distinct sample values, ascending in t.
inline std::vector<std::pair<double, double>> empirical_ccdf(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  std::vector<std::pair<double, double>> out;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (j + 1 < samples.size() && samples[j + 1] == samples[j]) continue;
    out.emplace_back(samples[j], static_cast<double>(samples.size() - 1 - j) / n);
  }
  return out;
}

// Same, thinned to at most ~max_points points spread evenly in log CCDF.
inline std::vector<std::pair<double, double>> empirical_ccdf_thinned(std::vector<double> samples,
                                                                     std::size_t max_points = 2000) {
  auto full = empirical_ccdf(std::move(samples));
  if (full.size() <= max_points) return full;
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(full.size());
  const double step = std::log(n) / static_cast<double>(max_points);
  double next_level = 0.0;
  for (const auto& pt : full) {
    if (pt.second <= 0.0) break;
    const double level = -std::log(pt.second);
    if (level >= next_level) {
      out.push_back(pt);
      next_level = level + step;
    }
  }
  return out;
}

// OLS slope of log10(empirical CCDF) against log10(t) over the sample points
// whose CDF level lies in [window.lower, window.upper].
inline TailEstimate estimate_tail_index(const std::vector<double>& samples, TailWindow window = {}) {
  if (!(window.lower > 0.0 && window.upper < 1.0 && window.lower < window.upper))
    throw EstimationError("tail window must satisfy 0 < lower < upper < 1");
  if (samples.size() < 1000) throw EstimationError("tail estimate needs at least 1000 samples");
  for (double s : samples)
    if (!(s > 0.0) || !std::isfinite(s)) throw EstimationError("tail samples must be positive and finite");

  const auto pts = empirical_ccdf(samples);
  std::vector<double> xs, ys;
  for (const auto& [t, c] : pts) {
    if (c <= 0.0) continue;
    const double level = 1.0 - c;
    if (level >= window.lower && level <= window.upper) {
      xs.push_back(std::log10(t));
      ys.push_back(std::log10(c));
    }
  }
  if (xs.size() < 30) throw EstimationError("fewer than 30 distinct points in the tail window");
  const double k = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    mx += xs[j];
    my += ys[j];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    sxx += (xs[j] - mx) * (xs[j] - mx);
    sxy += (xs[j] - mx) * (ys[j] - my);
  }
  if (!(sxx > 0.0)) throw EstimationError("degenerate tail: no spread in sample values");
  const double slope = sxy / sxx;
  double sse = 0.0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const double r = ys[j] - (my + slope * (xs[j] - mx));
    sse += r * r;
  }
  return {slope, std::sqrt(sse / (k - 2.0) / sxx), window, samples.size(), xs.size()};
}

// ---------------------------------------------------------------------------
// Saturation of a simulated queue.

struct SaturationVerdict {
  bool saturated = false;
  double last_departure_time = 0.0;
  double critical_time_estimate = 0.0;  // last time the queue sat at its all-time minimum
  double departure_rate_before = 0.0;   // departures per unit time up to the last departure
  std::uint64_t queue_at_last_departure = 0;
  std::uint64_t final_queue = 0;
};

struct SaturationRule {
  double guard = 0.25;   // no departures in the final guard * horizon
  double growth = 2.0;   // final queue >= growth * queue at the last departure
};

inline SaturationVerdict detect_saturation(const std::vector<TracePoint>& trajectory, double horizon,
                                           SaturationRule rule = {}) {
  if (trajectory.empty()) throw EstimationError("empty trajectory");
  SaturationVerdict v;
  const TracePoint& last = trajectory.back();
  v.final_queue = last.queue;

  // First point at which the departure count reached its final value.
  std::size_t dep_idx = trajectory.size() - 1;
  while (dep_idx > 0 && trajectory[dep_idx - 1].departures == last.departures) --dep_idx;
  if (last.departures == 0) dep_idx = 0;
  const TracePoint& at_dep = trajectory[dep_idx];
  v.last_departure_time = last.departures == 0 ? 0.0 : at_dep.t;
  v.queue_at_last_departure = at_dep.queue;
  v.departure_rate_before =
      v.last_departure_time > 0.0 ? static_cast<double>(at_dep.departures) / v.last_departure_time : 0.0;

  std::uint64_t floor_q = trajectory.front().queue;
  for (const auto& p : trajectory) floor_q = std::min(floor_q, p.queue);
  for (const auto& p : trajectory)
    if (p.queue == floor_q) v.critical_time_estimate = p.t;

  const bool quiet_tail = v.last_departure_time < horizon * (1.0 - rule.guard);
  const bool grew = v.final_queue > 0 &&
                    static_cast<double>(v.final_queue) >= rule.growth * static_cast<double>(v.queue_at_last_departure);
  v.saturated = quiet_tail && grew;
  return v;
}

}  // namespace restartq
