// channel.hpp - the failure-prone channel as a renewal process of
// availability periods A_1, A_2, ...; the channel fails at the end of each.

#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <utility>
#include <vector>

#include "restartq/distributions.hpp"
#include "restartq/numerics.hpp"
#include "restartq/rng.hpp"

namespace restartq {

enum class StartMode {
  Fresh,             // first failure after a full period A_1
  StationaryExcess,  // first failure after A_0 drawn from the excess law
};

// Draw from the excess (integrated-tail) law of `d`, whose CCDF is
// integrated_tail(d, x) / mean(d). Exponential laws are memoryless and
// sampled directly; everything else by bisection on the CCDF.
inline double sample_excess(const DistSpec& d, RngStream& stream) {
  if (d.family() == Family::Exponential) return sample(d, stream);
  const double u = stream.uniform();
  const double m = mean(d);
  auto below = [&](double x) { return integrated_tail(d, x) / m <= u; };
  double hi = std::max(m, 1.0);
  while (!below(hi)) hi *= 2.0;
  return numerics::bisect(below, 0.0, hi, 1e-10);
}

class FailureTimeline {
 public:
  FailureTimeline(DistSpec spec, StartMode mode, RngStream stream)
      : spec_(std::move(spec)), mode_(mode), stream_(std::move(stream)) {
    next_failure_ = mode_ == StartMode::Fresh ? draw_gap() : sample_excess(spec_, stream_);
  }

  // A timeline whose first gaps are given explicitly; once they run out,
  // gaps are drawn from `tail` on `stream`.
  static FailureTimeline scripted(std::vector<double> gaps, DistSpec tail, RngStream stream) {
    for (double g : gaps)
      if (!(g > 0.0)) throw ConfigError("scripted failure gaps must be > 0");
    return FailureTimeline(std::deque<double>(gaps.begin(), gaps.end()), std::move(tail),
                           std::move(stream));
  }

  const DistSpec& spec() const { return spec_; }
  StartMode start_mode() const { return mode_; }

  double last_failure_time() const { return last_failure_; }
  double next_failure_time() const { return next_failure_; }
  std::uint64_t failures_so_far() const { return failures_; }

  // The failure at next_failure_time() happens. Returns the length of the
  // period it closes and schedules the following failure.
  double advance_to_next_failure() {
    const double gap = next_failure_ - last_failure_;
    last_failure_ = next_failure_;
    ++failures_;
    next_failure_ = last_failure_ + draw_gap();
    return gap;
  }

  // Time from t until the next failure.
  double forward_recurrence(double t) const {
    if (t < last_failure_ || t > next_failure_)
      throw std::out_of_range("forward_recurrence: t outside the current availability period");
    return next_failure_ - t;
  }

 private:
  FailureTimeline(std::deque<double> scripted, DistSpec tail, RngStream stream)
      : spec_(std::move(tail)), mode_(StartMode::Fresh), stream_(std::move(stream)),
        scripted_(std::move(scripted)) {
    next_failure_ = draw_gap();
  }

  double draw_gap() {
    if (!scripted_.empty()) {
      const double g = scripted_.front();
      scripted_.pop_front();
      return g;
    }
    return sample(spec_, stream_);
  }

  DistSpec spec_;
  StartMode mode_;
  RngStream stream_;
  std::deque<double> scripted_;
  double last_failure_ = 0.0;
  double next_failure_ = 0.0;
  std::uint64_t failures_ = 0;
};

inline FailureTimeline make_failure_timeline(DistSpec spec, StartMode mode, RngStream stream) {
  return FailureTimeline(std::move(spec), mode, std::move(stream));
}

}  // namespace restartq
