#include "tamo/core/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <sstream>

#include "tamo/core/error.hpp"

namespace tamo::core {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(splitmix64(seed) ^ splitmix64(~stream))) {}

RngStream RngStream::child(std::uint64_t key) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(stream_ + 0x632be59bd9b4e019ULL)), key);
}

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw DomainError("RngStream::index with n = 0");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

long long RngStream::integer(long long lo, long long hi) {
  if (hi < lo) throw DomainError("RngStream::integer with hi < lo");
  return lo + static_cast<long long>(index(static_cast<std::size_t>(hi - lo) + 1));
}

double RngStream::normal() {
  // Box-Muller, one variate per call so the stream position is easy to reason about.
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> RngStream::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw SizeError("cannot sample " + std::to_string(k) + " of " + std::to_string(n) + " without replacement");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

std::string RngStream::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void RngStream::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw FormatError("invalid RNG state string");
}

}  // namespace tamo::core
