#include "gserec/util/rng.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace gserec::util {

namespace {

std::mt19937_64 seeded_engine(std::initializer_list<std::uint64_t> seeds) {
  std::vector<std::uint32_t> words;
  words.reserve(seeds.size() * 2);
  for (auto s : seeds) {
    words.push_back(static_cast<std::uint32_t>(s & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seeded_engine({seed})) {}

Rng::Rng(std::initializer_list<std::uint64_t> seeds) : engine_(seeded_engine(seeds)) {}

double Rng::uniform() {
  // 53 random mantissa bits.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

}  // namespace gserec::util
