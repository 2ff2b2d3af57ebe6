#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace oedflow {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  AdamMoments() = default;
  explicit AdamMoments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  bool operator==(const AdamMoments&) const = default;
};

/// Bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments, const AdamHyper& hyper);

}  // namespace oedflow
