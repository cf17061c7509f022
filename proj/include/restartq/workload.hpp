// workload.hpp - arrival streams, job draws and fragmentation.

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <variant>
#include <vector>

#include "restartq/distributions.hpp"
#include "restartq/errors.hpp"
#include "restartq/rng.hpp"

namespace restartq {

struct PoissonArrivals {
  double rate;
};
struct RenewalArrivals {
  DistSpec interarrival;
};

class ArrivalSpec {
 public:
  ArrivalSpec(PoissonArrivals p) : kind_(p) {
    if (!(std::isfinite(p.rate) && p.rate > 0.0)) throw ConfigError("arrival rate must be > 0");
  }
  ArrivalSpec(RenewalArrivals r) : kind_(std::move(r)) {}

  static ArrivalSpec poisson(double rate) { return PoissonArrivals{rate}; }
  static ArrivalSpec renewal(DistSpec interarrival) { return RenewalArrivals{std::move(interarrival)}; }

  bool is_poisson() const { return std::holds_alternative<PoissonArrivals>(kind_); }
  double poisson_rate() const { return std::get<PoissonArrivals>(kind_).rate; }
  const DistSpec& interarrival() const { return std::get<RenewalArrivals>(kind_).interarrival; }

  // Long-run arrival rate.
  double rate() const { return is_poisson() ? poisson_rate() : 1.0 / mean(interarrival()); }

 private:
  std::variant<PoissonArrivals, RenewalArrivals> kind_;
};

inline double next_interarrival(const ArrivalSpec& spec, RngStream& stream) {
  if (spec.is_poisson()) return -std::log(stream.uniform()) / spec.poisson_rate();
  return sample(spec.interarrival(), stream);
}

struct JobSpec {
  DistSpec size;
  std::vector<double> class_probs{1.0};  // index = class id
  double header = 0.0;                   // per-job overhead included in size

  void validate() const {
    if (class_probs.empty()) throw ConfigError("job classes: at least one class required");
    double total = 0.0;
    for (double p : class_probs) {
      if (!(p >= 0.0)) throw ConfigError("job classes: probabilities must be >= 0");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("job classes: probabilities must sum to 1");
    if (!(header >= 0.0)) throw ConfigError("job header must be >= 0");
  }
};

struct JobDraw {
  double size;
  std::size_t job_class;
};

// Size and class come from separate streams so that adding classes never
// changes the size sequence.
inline JobDraw draw_job(const JobSpec& spec, RngStream& size_stream, RngStream& class_stream) {
  JobDraw out{sample(spec.size, size_stream), 0};
  if (spec.class_probs.size() > 1) {
    const double u = class_stream.uniform();
    double acc = 0.0;
    out.job_class = spec.class_probs.size() - 1;
    for (std::size_t k = 0; k < spec.class_probs.size(); ++k) {
      acc += spec.class_probs[k];
      if (u < acc) {
        out.job_class = k;
        break;
      }
    }
  }
  return out;
}

// Splits `useful` units into ceil(useful / payload) fragments, each carrying
// `header` on top of its share; the last fragment takes the remainder.
inline std::vector<double> fragment_job(double useful, double payload, double header) {
  if (!(payload > 0.0)) throw ConfigError("fragment payload must be > 0");
  if (!(useful > 0.0)) throw ConfigError("fragmented job size must be > 0");
  if (!(header >= 0.0)) throw ConfigError("fragment header must be >= 0");
  // Shave a relative 1e-12 so that 0.3 / 0.1 = 2.9999999999999996 still
  // yields three fragments and 1.0 / 0.5 yields two.
  const auto count =
      static_cast<std::size_t>(std::max(1.0, std::ceil(useful / payload * (1.0 - 1e-12))));
  std::vector<double> out(count, payload + header);
  out.back() = (useful - static_cast<double>(count - 1) * payload) + header;
  return out;
}

}  // namespace restartq
