#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tamo::core {

/// Seeded 64-bit random stream. The engine is std::mt19937_64 (fully specified
/// by the standard); uniform/normal transforms are implemented here so that a
/// given (seed, stream) yields the same sequence on every platform.
class RngStream {
 public:
  static constexpr const char* algorithm = "mt19937_64/splitmix64";

  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent child stream, a pure function of (seed, stream, key).
  RngStream child(std::uint64_t key) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Uniform integer in [lo, hi] (inclusive).
  long long integer(long long lo, long long hi);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  /// k distinct indices from [0, n), in sampled order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);
  std::vector<std::size_t> permutation(std::size_t n) { return sample_without_replacement(n, n); }

  /// Engine state in the standard textual form.
  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace tamo::core
