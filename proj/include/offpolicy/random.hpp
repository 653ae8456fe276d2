#ifndef OFFPOLICY_RANDOM_HPP_
#define OFFPOLICY_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <string>

namespace offpolicy {

// Seeded generator with platform-independent draws. The standard library's
// distribution objects are implementation-defined, so the mappings from raw
// 64-bit words to doubles live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (no cached second draw).
  double normal();

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Stateless seed mixing (splitmix64 finalizer) for per-episode streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace offpolicy

#endif  // OFFPOLICY_RANDOM_HPP_
