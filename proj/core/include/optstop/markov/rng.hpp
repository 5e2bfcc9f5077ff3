#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace optstop::markov {

/// Independent purposes get independent stream families even under the same seed.
enum class StreamDomain : std::uint64_t {
  path = 1,
  build_noise = 2,
  validation = 3,
  inner = 4,
  rollout = 5,
  pilot = 6,
  certificate = 7,
  study = 8,
  bootstrap = 9,
};

/// Counter-keyed SplitMix64 stream. The state is derived from
/// (seed, domain, t, index) by a mixing hash, so any stream can be created in
/// O(1) without advancing others; parallel workers with disjoint indices
/// reproduce the sequential result exactly.
class StreamRng {
 public:
  using result_type = std::uint64_t;

  StreamRng(std::uint64_t seed, StreamDomain domain, std::uint64_t t, std::uint64_t index);
  explicit StreamRng(std::uint64_t state) : state_(state) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double normal() { return normal_(*this); }
  int poisson(double mean) { return std::poisson_distribution<int>(mean)(*this); }

 private:
  std::uint64_t state_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer, exposed for hashing seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace optstop::markov
