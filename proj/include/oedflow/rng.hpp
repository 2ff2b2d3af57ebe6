#pragma once

#include <cstdint>
#include <string_view>

#include "oedflow/grid.hpp"

namespace oedflow {

/// Counter-based generator: output i is splitmix64(seed + i * golden).
/// The full state is (seed, counter), so streams are reproducible from two
/// integers and child streams can be derived without touching the parent.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-counter";

  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal via Box-Muller; consumes two words, discards the sine branch.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Independent stream keyed by name; does not advance this stream.
  Rng split(std::string_view name) const;
  /// Independent stream keyed by index; does not advance this stream.
  Rng split(std::uint64_t index) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_name(std::string_view name);

/// I.i.d. standard normal grid; fills entries pairwise from Box-Muller.
RealGrid gauss_sample(Rng& rng, const Shape& shape);
void gauss_fill(Rng& rng, std::span<double> out);

}  // namespace oedflow
