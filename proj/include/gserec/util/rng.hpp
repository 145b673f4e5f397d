#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <utility>

namespace gserec::util {

/// Seeded random source whose draws depend only on the seed.
///
/// The engine (mt19937_64) and std::seed_seq are fully specified by the
/// standard; the distributions are implemented here rather than taken from
/// <random>, whose distribution algorithms vary across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::initializer_list<std::uint64_t> seeds);

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace gserec::util
