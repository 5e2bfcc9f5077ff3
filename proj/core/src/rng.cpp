#include "optstop/markov/rng.hpp"

namespace optstop::markov {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

StreamRng::StreamRng(std::uint64_t seed, StreamDomain domain, std::uint64_t t, std::uint64_t index)
    : state_(mix64(mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(domain)) ^ t) ^ index)) {}

}  // namespace optstop::markov
