#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "restartq/channel.hpp"
#include "restartq/numerics.hpp"
#include "restartq/workload.hpp"

using namespace restartq;

namespace {

double dkw99(std::size_t n) { return std::sqrt(std::log(2.0 / 0.01) / (2.0 * static_cast<double>(n))); }

double ks_exponential(std::vector<double> xs, double rate) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double sup = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double f = -std::expm1(-rate * xs[k]);
    sup = std::max({sup, std::abs(f - k / n), std::abs(f - (k + 1) / n)});
  }
  return sup;
}

}  // namespace

TEST(Channel, DeterministicFreshFailures) {
  FailureTimeline tl(DistSpec::deterministic(5.0), StartMode::Fresh, RngStream(1, streams::kFailures));
  EXPECT_EQ(tl.next_failure_time(), 5.0);
  for (int k = 1; k <= 3; ++k) {
    EXPECT_EQ(tl.advance_to_next_failure(), 5.0);
    EXPECT_EQ(tl.failures_so_far(), static_cast<std::uint64_t>(k));
    EXPECT_EQ(tl.last_failure_time(), 5.0 * k);
    EXPECT_EQ(tl.next_failure_time(), 5.0 * (k + 1));
  }
}

TEST(Channel, ForwardRecurrence) {
  FailureTimeline tl(DistSpec::deterministic(5.0), StartMode::Fresh, RngStream(1, 4));
  EXPECT_EQ(tl.forward_recurrence(3.0), 2.0);
  EXPECT_EQ(tl.forward_recurrence(5.0), 0.0);
  EXPECT_THROW(tl.forward_recurrence(5.5), std::out_of_range);
  tl.advance_to_next_failure();
  EXPECT_THROW(tl.forward_recurrence(4.0), std::out_of_range);
}

TEST(Channel, ExponentialGapMean) {
  FailureTimeline tl(DistSpec::exponential(0.05), StartMode::Fresh, RngStream(3, 4));
  double sum = 0.0;
  const int n = 1'000'000;
  for (int k = 0; k < n; ++k) sum += tl.advance_to_next_failure();
  EXPECT_NEAR(sum / n, 20.0, 0.1);
}

TEST(Channel, ExponentialStationaryStartIsExponential) {
  const double mu = 0.05;
  std::vector<double> first;
  for (std::uint64_t k = 0; k < 100'000; ++k)
    first.push_back(FailureTimeline(DistSpec::exponential(mu), StartMode::StationaryExcess, RngStream(k, 4))
                        .next_failure_time());
  EXPECT_LT(ks_exponential(first, mu), dkw99(first.size()));
}

TEST(Channel, WeibullExcessMean) {
  const DistSpec d = DistSpec::weibull(2.0, 2.0);
  // E[A^2] / (2 E[A]) with both moments from quadrature of the tail.
  double m1 = 0.0, m2 = 0.0;
  for (double lo = 0.0; lo < 40.0; lo += 1.0) {
    m1 += numerics::integrate([&](double x) { return ccdf(d, x); }, lo, lo + 1.0, {}, 1e-13);
    m2 += numerics::integrate([&](double x) { return 2.0 * x * ccdf(d, x); }, lo, lo + 1.0, {}, 1e-13);
  }
  const double expected = m2 / (2.0 * m1);
  double sum = 0.0;
  const int n = 100'000;
  RngStream s(5, 4);
  for (int k = 0; k < n; ++k) sum += sample_excess(d, s);
  EXPECT_NEAR(sum / n, expected, 0.02 * expected);
}

TEST(Channel, ForwardRecurrenceAtRandomTimeIsExponential) {
  const double mu = 0.2;
  FailureTimeline tl(DistSpec::exponential(mu), StartMode::Fresh, RngStream(8, 4));
  RngStream clock(8, 77);
  std::vector<double> taus;
  double t = 0.0;
  for (int k = 0; k < 50'000; ++k) {
    t += 50.0 * clock.uniform();
    while (tl.next_failure_time() < t) tl.advance_to_next_failure();
    taus.push_back(tl.forward_recurrence(t));
  }
  EXPECT_LT(ks_exponential(taus, mu), dkw99(taus.size()));
}

TEST(Channel, RenewalRate) {
  const DistSpec d = DistSpec::weibull(2.0, 2.0);
  const double horizon = 1e4 * mean(d);
  FailureTimeline tl(d, StartMode::Fresh, RngStream(9, 4));
  while (tl.next_failure_time() <= horizon) tl.advance_to_next_failure();
  const double rate = static_cast<double>(tl.failures_so_far()) / horizon;
  EXPECT_NEAR(rate, 1.0 / mean(d), 0.02 / mean(d));
}

TEST(Channel, ScriptedGapsThenTail) {
  auto tl = FailureTimeline::scripted({1.5, 10.0}, DistSpec::deterministic(2.0), RngStream(1, 4));
  EXPECT_EQ(tl.next_failure_time(), 1.5);
  EXPECT_EQ(tl.advance_to_next_failure(), 1.5);
  EXPECT_EQ(tl.advance_to_next_failure(), 10.0);
  EXPECT_EQ(tl.advance_to_next_failure(), 2.0);
  EXPECT_EQ(tl.last_failure_time(), 13.5);
  EXPECT_THROW(FailureTimeline::scripted({1.0, 0.0}, DistSpec::deterministic(1.0), RngStream(1, 4)), ConfigError);
}

TEST(Channel, GapsUncorrelatedWithArrivals) {
  FailureTimeline tl(DistSpec::exponential(0.05), StartMode::Fresh, RngStream(11, streams::kFailures));
  RngStream arrivals(11, streams::kArrivals);
  const auto spec = ArrivalSpec::poisson(0.1);
  const int n = 100'000;
  std::vector<double> a(n), b(n);
  for (int k = 0; k < n; ++k) {
    a[k] = tl.advance_to_next_failure();
    b[k] = next_interarrival(spec, arrivals);
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (int k = 0; k < n; ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  EXPECT_LT(std::abs(sab / std::sqrt(saa * sbb)), 0.02);
}

TEST(Workload, InterarrivalMeans) {
  RngStream s(2, 1);
  const auto poisson = ArrivalSpec::poisson(0.1);
  double sum = 0.0;
  for (int k = 0; k < 1'000'000; ++k) sum += next_interarrival(poisson, s);
  EXPECT_NEAR(sum / 1e6, 10.0, 0.05);

  const auto pareto = ArrivalSpec::renewal(DistSpec::pareto(5.05, 2.0));
  EXPECT_DOUBLE_EQ(pareto.rate(), 1.0 / 10.1);
  sum = 0.0;
  for (int k = 0; k < 1'000'000; ++k) sum += next_interarrival(pareto, s);
  EXPECT_NEAR(sum / 1e6, 10.1, 0.3);

  const auto fixed = ArrivalSpec::renewal(DistSpec::deterministic(3.0));
  for (int k = 0; k < 10; ++k) EXPECT_EQ(next_interarrival(fixed, s), 3.0);
  EXPECT_THROW(ArrivalSpec::poisson(0.0), ConfigError);
}

TEST(Workload, PoissonCountsPassChiSquare) {
  // Arrivals in (0, T] with lambda T = 50 over 10^4 replications.
  const double lambda = 0.5, horizon = 100.0;
  const auto spec = ArrivalSpec::poisson(lambda);
  const int reps = 10'000;
  std::vector<int> counts(reps);
  for (int r = 0; r < reps; ++r) {
    RngStream s(derive_seed(21, r), streams::kArrivals);
    int c = 0;
    for (double t = next_interarrival(spec, s); t <= horizon; t += next_interarrival(spec, s)) ++c;
    counts[r] = c;
  }
  // Bins: <= 35, 36..64 singly, >= 65.
  const double m = lambda * horizon;
  auto pmf = [&](int k) { return std::exp(k * std::log(m) - m - std::lgamma(k + 1.0)); };
  std::vector<double> expected, observed;
  double low = 0.0;
  for (int k = 0; k <= 35; ++k) low += pmf(k);
  expected.push_back(low);
  for (int k = 36; k <= 64; ++k) expected.push_back(pmf(k));
  double acc = 0.0;
  for (double e : expected) acc += e;
  expected.push_back(1.0 - acc);
  observed.assign(expected.size(), 0.0);
  for (int c : counts) observed[c <= 35 ? 0 : c >= 65 ? expected.size() - 1 : c - 35] += 1.0;
  double chi2 = 0.0;
  for (std::size_t b = 0; b < expected.size(); ++b) {
    const double e = expected[b] * reps;
    chi2 += (observed[b] - e) * (observed[b] - e) / e;
  }
  const boost::math::chi_squared dist(static_cast<double>(expected.size() - 1));
  EXPECT_LT(chi2, boost::math::quantile(dist, 0.99));
}

TEST(Workload, DrawJob) {
  RngStream sizes(1, 2), classes(1, 3);
  JobSpec one{DistSpec::deterministic(1.0)};
  const auto d = draw_job(one, sizes, classes);
  EXPECT_EQ(d.size, 1.0);
  EXPECT_EQ(d.job_class, 0u);

  JobSpec two{DistSpec::exponential(1.0), {0.5, 0.5}};
  two.validate();
  int ones = 0;
  double sum = 0.0;
  for (int k = 0; k < 100'000; ++k) {
    const auto j = draw_job(two, sizes, classes);
    ones += j.job_class == 1;
  }
  EXPECT_NEAR(ones / 1e5, 0.5, 0.01);
  for (int k = 0; k < 1'000'000; ++k) sum += draw_job(two, sizes, classes).size;
  EXPECT_NEAR(sum / 1e6, 1.0, 0.01);

  EXPECT_THROW((JobSpec{DistSpec::deterministic(1.0), {0.5, 0.6}}.validate()), ConfigError);
  EXPECT_THROW((JobSpec{DistSpec::deterministic(1.0), {}}.validate()), ConfigError);
}

TEST(Workload, ClassesDoNotShiftSizes) {
  RngStream s1(4, 2), c1(4, 3), s2(4, 2), c2(4, 3);
  JobSpec a{DistSpec::exponential(1.0)};
  JobSpec b{DistSpec::exponential(1.0), {0.3, 0.7}};
  for (int k = 0; k < 100; ++k) EXPECT_EQ(draw_job(a, s1, c1).size, draw_job(b, s2, c2).size);
}

TEST(Workload, FragmentExamples) {
  auto near = [](const std::vector<double>& got, const std::vector<double>& want) {
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  };
  near(fragment_job(1.0, 0.5, 0.2), {0.7, 0.7});
  near(fragment_job(1.0, 2.0, 0.2), {1.2});
  near(fragment_job(1.0, 0.4, 0.2), {0.6, 0.6, 0.4});
  near(fragment_job(0.3, 0.1, 0.0), {0.1, 0.1, 0.1});
  EXPECT_THROW(fragment_job(1.0, 0.0, 0.2), ConfigError);
}

TEST(Workload, FragmentConservesUsefulMass) {
  RngStream s(6, 1);
  for (int k = 0; k < 10'000; ++k) {
    const double useful = 0.01 + 10.0 * s.uniform();
    const double payload = 0.05 + 3.0 * s.uniform();
    const double header = 0.5 * s.uniform();
    const auto parts = fragment_job(useful, payload, header);
    EXPECT_EQ(parts.size(), static_cast<std::size_t>(std::ceil(useful / payload * (1.0 - 1e-12))));
    const double total = std::accumulate(parts.begin(), parts.end(), 0.0);
    EXPECT_NEAR(total - parts.size() * header, useful, 1e-12 * std::max(1.0, useful * parts.size()));
    for (double p : parts) EXPECT_LE(p, payload + header + 1e-12);
  }
}
