#pragma once

#include <cstdint>
#include <random>

namespace ope {

/// Seedable generator with derived substreams. Every stochastic operation in
/// the library takes one of these explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x6f70u};
    engine_.seed(seq);
  }

  /// Independent stream keyed by (this stream, index). Does not advance *this.
  Rng split(std::uint64_t index) const {
    return Rng(seed_, stream_ * 0x9E3779B97F4A7C15ull + index + 1);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return mean + stddev * std_normal_(engine_);
  }

  std::uint64_t next() { return engine_(); }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> std_normal_;
};

}  // namespace ope
