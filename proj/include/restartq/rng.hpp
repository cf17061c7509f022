// rng.hpp - reproducible random streams keyed by (seed, stream id).
//
// Every random quantity in a simulation run (arrivals, job sizes, job
// classes, failures) draws from its own RngStream so that changing one
// primitive never perturbs the sample path of another.

#pragma once

#include <cstdint>
#include <random>

namespace restartq {

// SplitMix64 finalizer; used to decorrelate nearby seeds and stream ids.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed of replica `index` under `master`. Pure function of its inputs, so
// replicas can be scheduled in any order or on any thread.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x5851F42D4C957F2DULL));
}

// Stream ids used by the simulator. Kept stable: changing them changes every
// recorded dataset.
namespace streams {
inline constexpr std::uint64_t kArrivals = 1;
inline constexpr std::uint64_t kJobSizes = 2;
inline constexpr std::uint64_t kJobClasses = 3;
inline constexpr std::uint64_t kFailures = 4;
}  // namespace streams

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id),
        engine_(splitmix64(seed) ^ splitmix64(~stream_id * 0xD1342543DE82EF95ULL)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1), 53 bits. Built from raw engine
  // output rather than std::uniform_real_distribution so that sequences are
  // identical across standard library implementations.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

}  // namespace restartq
