#include "oedflow/rng.hpp"

#include <cmath>
#include <numbers>

namespace oedflow {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

std::uint64_t splitmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_name(std::string_view name) {
  // FNV-1a, then mixed.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(h);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return splitmix64(seed_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // u1 in (0, 1] keeps the log finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

Rng Rng::split(std::string_view name) const { return Rng(splitmix64(seed_ ^ hash_name(name)), 0); }

Rng Rng::split(std::uint64_t index) const { return Rng(splitmix64(splitmix64(seed_) + index * kGolden + 1), 0); }

void gauss_fill(Rng& rng, std::span<double> out) {
  std::size_t i = 0;
  for (; i + 2 <= out.size(); i += 2) {
    const double u1 = static_cast<double>((rng.next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    out[i] = r * std::cos(kTwoPi * u2);
    out[i + 1] = r * std::sin(kTwoPi * u2);
  }
  if (i < out.size()) out[i] = rng.normal();
}

RealGrid gauss_sample(Rng& rng, const Shape& shape) {
  RealGrid g(shape);
  gauss_fill(rng, g.data);
  return g;
}

}  // namespace oedflow
