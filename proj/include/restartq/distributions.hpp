// distributions.hpp - positive laws used for availability periods, job sizes
// and interarrival times: sampling, tail functions and moments.
//
// Parameterizations:
//   Deterministic(value)          P(X = value) = 1
//   Exponential(rate)             P(X > x) = exp(-rate x)
//   Weibull(scale, shape)         P(X > x) = exp(-(x / scale)^shape)
//   Pareto(scale, index)          P(X > x) = (scale / x)^index, x >= scale
//   Uniform(lower, upper)         flat density on [lower, upper]
//
// Sampling is by inverse CCDF, one uniform per variate.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "restartq/errors.hpp"
#include "restartq/numerics.hpp"
#include "restartq/rng.hpp"

namespace restartq {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Deterministic {
  double value;
  friend bool operator==(const Deterministic&, const Deterministic&) = default;
};
struct Exponential {
  double rate;
  friend bool operator==(const Exponential&, const Exponential&) = default;
};
struct Weibull {
  double scale;
  double shape;
  friend bool operator==(const Weibull&, const Weibull&) = default;
};
struct Pareto {
  double scale;
  double index;
  friend bool operator==(const Pareto&, const Pareto&) = default;
};
struct Uniform {
  double lower;
  double upper;
  friend bool operator==(const Uniform&, const Uniform&) = default;
};

enum class Family { Deterministic, Exponential, Weibull, Pareto, Uniform };

namespace detail {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }
}  // namespace detail

// Immutable, validated description of a positive law. Construction rejects
// parameters outside the supported range, so every DistSpec in circulation
// has a finite mean.
class DistSpec {
 public:
  using Law = std::variant<Deterministic, Exponential, Weibull, Pareto, Uniform>;

  DistSpec(Deterministic d) : law_(d) {
    if (!detail::positive_finite(d.value))
      throw ConfigError("deterministic value must be > 0");
  }
  DistSpec(Exponential e) : law_(e) {
    if (!detail::positive_finite(e.rate))
      throw ConfigError("exponential rate must be > 0");
  }
  DistSpec(Weibull w) : law_(w) {
    if (!detail::positive_finite(w.scale) || !detail::positive_finite(w.shape))
      throw ConfigError("weibull scale and shape must be > 0");
  }
  DistSpec(Pareto p) : law_(p) {
    if (!detail::positive_finite(p.scale))
      throw ConfigError("pareto scale must be > 0");
    if (!(std::isfinite(p.index) && p.index > 1.0))
      throw ConfigError("pareto index must be > 1 (mean infinite otherwise)");
  }
  DistSpec(Uniform u) : law_(u) {
    if (!(std::isfinite(u.lower) && std::isfinite(u.upper) && u.lower >= 0.0 &&
          u.upper > u.lower))
      throw ConfigError("uniform bounds must satisfy 0 <= lower < upper");
  }

  static DistSpec deterministic(double value) { return Deterministic{value}; }
  static DistSpec exponential(double rate) { return Exponential{rate}; }
  static DistSpec weibull(double scale, double shape) { return Weibull{scale, shape}; }
  static DistSpec pareto(double scale, double index) { return Pareto{scale, index}; }
  static DistSpec uniform(double lower, double upper) { return Uniform{lower, upper}; }

  const Law& law() const { return law_; }
  Family family() const { return static_cast<Family>(law_.index()); }

  template <typename T>
  const T& as() const { return std::get<T>(law_); }

  template <typename... Fs>
  decltype(auto) visit(Fs&&... fs) const {
    return std::visit(detail::overloaded{std::forward<Fs>(fs)...}, law_);
  }

  friend bool operator==(const DistSpec&, const DistSpec&) = default;

 private:
  Law law_;
};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::Deterministic: return "deterministic";
    case Family::Exponential: return "exponential";
    case Family::Weibull: return "weibull";
    case Family::Pareto: return "pareto";
    case Family::Uniform: return "uniform";
  }
  return "?";
}

inline std::string to_string(const DistSpec& d) {
  std::ostringstream os;
  os.precision(17);
  d.visit([&](const Deterministic& x) { os << "deterministic(value=" << x.value << ")"; },
          [&](const Exponential& x) { os << "exponential(rate=" << x.rate << ")"; },
          [&](const Weibull& x) { os << "weibull(scale=" << x.scale << ", shape=" << x.shape << ")"; },
          [&](const Pareto& x) { os << "pareto(scale=" << x.scale << ", index=" << x.index << ")"; },
          [&](const Uniform& x) { os << "uniform(lower=" << x.lower << ", upper=" << x.upper << ")"; });
  return os.str();
}

// P(X > x).
inline double ccdf(const DistSpec& d, double x) {
  if (x < 0.0) return 1.0;
  return d.visit(
      [&](const Deterministic& p) { return x < p.value ? 1.0 : 0.0; },
      [&](const Exponential& p) { return std::exp(-p.rate * x); },
      [&](const Weibull& p) { return std::exp(-std::pow(x / p.scale, p.shape)); },
      [&](const Pareto& p) { return x <= p.scale ? 1.0 : std::pow(p.scale / x, p.index); },
      [&](const Uniform& p) {
        if (x <= p.lower) return 1.0;
        if (x >= p.upper) return 0.0;
        return (p.upper - x) / (p.upper - p.lower);
      });
}

// log P(X > x), accurate deep in the tail where ccdf underflows.
inline double log_ccdf(const DistSpec& d, double x) {
  if (x < 0.0) return 0.0;
  return d.visit(
      [&](const Deterministic& p) { return x < p.value ? 0.0 : -kInf; },
      [&](const Exponential& p) { return -p.rate * x; },
      [&](const Weibull& p) { return -std::pow(x / p.scale, p.shape); },
      [&](const Pareto& p) { return x <= p.scale ? 0.0 : p.index * std::log(p.scale / x); },
      [&](const Uniform& p) { return std::log(ccdf(DistSpec(p), x)); });
}

// Density; zero for the point mass (it has none).
inline double pdf(const DistSpec& d, double x) {
  if (x < 0.0) return 0.0;
  return d.visit(
      [&](const Deterministic&) { return 0.0; },
      [&](const Exponential& p) { return p.rate * std::exp(-p.rate * x); },
      [&](const Weibull& p) {
        if (x == 0.0) return p.shape < 1.0 ? kInf : (p.shape == 1.0 ? 1.0 / p.scale : 0.0);
        const double z = std::pow(x / p.scale, p.shape);
        return p.shape / x * z * std::exp(-z);
      },
      [&](const Pareto& p) {
        return x < p.scale ? 0.0 : p.index / p.scale * std::pow(p.scale / x, p.index + 1.0);
      },
      [&](const Uniform& p) {
        return (x < p.lower || x > p.upper) ? 0.0 : 1.0 / (p.upper - p.lower);
      });
}

// Inverse of the CCDF: the x with P(X > x) = tail, for tail in (0, 1).
inline double quantile_ccdf(const DistSpec& d, double tail) {
  return d.visit(
      [&](const Deterministic& p) { return p.value; },
      [&](const Exponential& p) { return -std::log(tail) / p.rate; },
      [&](const Weibull& p) { return p.scale * std::pow(-std::log(tail), 1.0 / p.shape); },
      [&](const Pareto& p) { return p.scale * std::pow(tail, -1.0 / p.index); },
      [&](const Uniform& p) { return p.upper - tail * (p.upper - p.lower); });
}

inline double sample(const DistSpec& d, RngStream& stream) {
  return quantile_ccdf(d, stream.uniform());
}

inline double mean(const DistSpec& d) {
  return d.visit(
      [](const Deterministic& p) { return p.value; },
      [](const Exponential& p) { return 1.0 / p.rate; },
      [](const Weibull& p) { return p.scale * std::tgamma(1.0 + 1.0 / p.shape); },
      [](const Pareto& p) { return p.scale * p.index / (p.index - 1.0); },
      [](const Uniform& p) { return 0.5 * (p.lower + p.upper); });
}

// E[X^2]; infinite for Pareto with index <= 2.
inline double second_moment(const DistSpec& d) {
  return d.visit(
      [](const Deterministic& p) { return p.value * p.value; },
      [](const Exponential& p) { return 2.0 / (p.rate * p.rate); },
      [](const Weibull& p) { return p.scale * p.scale * std::tgamma(1.0 + 2.0 / p.shape); },
      [](const Pareto& p) {
        return p.index > 2.0 ? p.index * p.scale * p.scale / (p.index - 2.0) : kInf;
      },
      [](const Uniform& p) {
        return (p.lower * p.lower + p.lower * p.upper + p.upper * p.upper) / 3.0;
      });
}

// Quantile breakpoints for quadrature over heavy or long tails.
inline std::vector<double> tail_breaks(const DistSpec& d) {
  std::vector<double> out;
  for (double tail : {1.0 - 1e-6, 1.0 - 1e-3, 0.9, 0.5, 0.1, 1e-2, 1e-3, 1e-4, 1e-6,
                      1e-9, 1e-12, 1e-16, 1e-20, 1e-30})
    out.push_back(quantile_ccdf(d, tail));
  return out;
}

// E[X 1{X < cutoff}]. Closed forms except Weibull, which is integrated
// numerically (absolute error well below 1e-10 for the laws used here).
inline double truncated_mean_below(const DistSpec& d, double cutoff) {
  if (!(cutoff > 0.0)) return 0.0;
  return d.visit(
      [&](const Deterministic& p) { return p.value < cutoff ? p.value : 0.0; },
      [&](const Exponential& p) {
        if (std::isinf(cutoff)) return 1.0 / p.rate;
        const double z = p.rate * cutoff;
        return (1.0 - std::exp(-z) * (1.0 + z)) / p.rate;
      },
      [&](const Weibull& p) {
        const double k = 1.0 + 1.0 / p.shape;
        if (std::isinf(cutoff)) return p.scale * std::tgamma(k);
        return p.scale * std::tgamma(k) * boost::math::gamma_p(k, std::pow(cutoff / p.scale, p.shape));
      },
      [&](const Pareto& p) {
        if (cutoff <= p.scale) return 0.0;
        const double a = p.index;
        if (std::isinf(cutoff)) return p.scale * a / (a - 1.0);
        return a * std::pow(p.scale, a) *
               (std::pow(cutoff, 1.0 - a) - std::pow(p.scale, 1.0 - a)) / (1.0 - a);
      },
      [&](const Uniform& p) {
        const double b = std::clamp(cutoff, p.lower, p.upper);
        return (b * b - p.lower * p.lower) / (2.0 * (p.upper - p.lower));
      });
}

// Integrated tail: the integral of P(X > u) over u in [x, inf).
inline double integrated_tail(const DistSpec& d, double x) {
  if (x < 0.0) return -x + mean(d);
  return d.visit(
      [&](const Deterministic& p) { return std::max(p.value - x, 0.0); },
      [&](const Exponential& p) { return std::exp(-p.rate * x) / p.rate; },
      [&](const Weibull& p) {
        return p.scale * std::tgamma(1.0 + 1.0 / p.shape) *
               boost::math::gamma_q(1.0 / p.shape, std::pow(x / p.scale, p.shape));
      },
      [&](const Pareto& p) {
        const double a = p.index;
        if (x < p.scale) return (p.scale - x) + p.scale / (a - 1.0);
        return std::pow(p.scale, a) * std::pow(x, 1.0 - a) / (a - 1.0);
      },
      [&](const Uniform& p) {
        const double w = p.upper - p.lower;
        if (x < p.lower) return (p.lower - x) + 0.5 * w;
        if (x >= p.upper) return 0.0;
        return (p.upper - x) * (p.upper - x) / (2.0 * w);
      });
}

// Job-size law F with log F(x) = alpha * log G(x) for every x, where G is the
// failure law. Representable in-family only for exponential and Weibull
// failures: the shape is kept and the scale shrinks by alpha^(-1/shape).
inline DistSpec hazard_proportional_job_dist(const DistSpec& failure, double alpha) {
  if (!(std::isfinite(alpha) && alpha > 1.0))
    throw ConfigError("hazard proportionality index must be > 1");
  return failure.visit(
      [&](const Exponential& p) -> DistSpec { return Exponential{p.rate * alpha}; },
      [&](const Weibull& p) -> DistSpec {
        return Weibull{p.scale * std::pow(alpha, -1.0 / p.shape), p.shape};
      },
      [&](const auto&) -> DistSpec {
        throw ConfigError("hazard-proportional job law requires exponential or weibull failures");
      });
}

}  // namespace restartq
