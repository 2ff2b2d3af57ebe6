#include "oedflow/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "oedflow/error.hpp"
#include "oedflow/fft.hpp"

namespace oedflow {

namespace {

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void require_budget(double s, const char* who) {
  if (!(s > 0.0 && s < 1.0)) throw InvalidArgument(std::string(who) + ": budget must lie in (0, 1)");
}

struct Normalized {
  std::vector<double> q;
  double mean_q = 0.0;
  std::vector<double> unclamped_p;  // s * q / mean(q) before clamping
};

Normalized normalize(const DesignWeights& d) {
  d.validate();
  Normalized out;
  const std::size_t n = d.raw.size();
  out.q.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.q[i] = sigmoid(d.raw.data[i]);
    sum += out.q[i];
  }
  out.mean_q = sum / static_cast<double>(n);
  if (!(out.mean_q > 0.0)) throw NumericalError("weights_to_probs: mean sigmoid weight is zero");
  out.unclamped_p.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.unclamped_p[i] = d.budget * out.q[i] / out.mean_q;
  return out;
}

}  // namespace

void DesignWeights::validate() const {
  require_budget(budget, "DesignWeights");
  if (raw.size() == 0) throw InvalidArgument("DesignWeights: empty weight field");
  require_finite(raw.data, "DesignWeights raw");
}

RealGrid weights_to_probs(const DesignWeights& d) {
  const auto nz = normalize(d);
  RealGrid p(d.raw.shape);
  for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = std::clamp(nz.unclamped_p[i], 0.0, 1.0);
  return p;
}

MaskSample sample_mask_from_probs(const RealGrid& probs, Rng& rng) {
  MaskSample m{BitGrid(probs.shape), probs};
  for (std::size_t i = 0; i < probs.size(); ++i) m.bits.bits[i] = rng.uniform() < probs.data[i] ? 1 : 0;
  return m;
}

MaskSample sample_mask(const DesignWeights& d, Rng& rng) { return sample_mask_from_probs(weights_to_probs(d), rng); }

RealGrid probs_backward(const DesignWeights& d, const RealGrid& upstream) {
  require_same_shape(d.raw.shape, upstream.shape, "probs_backward");
  const auto nz = normalize(d);
  const std::size_t n = nz.q.size();
  const double s = d.budget;
  const double m = nz.mean_q;
  // p_i = s q_i / m on unclamped entries:
  //   dL/dq_j = [j free] g_j s / m - (s / (n m^2)) sum_{i free} g_i q_i
  double coupled = 0.0;
  std::vector<bool> free(n);
  for (std::size_t i = 0; i < n; ++i) {
    free[i] = nz.unclamped_p[i] < 1.0;
    if (free[i]) coupled += upstream.data[i] * nz.q[i];
  }
  coupled *= s / (static_cast<double>(n) * m * m);
  RealGrid grad(d.raw.shape);
  for (std::size_t j = 0; j < n; ++j) {
    const double dq = (free[j] ? upstream.data[j] * s / m : 0.0) - coupled;
    grad.data[j] = dq * nz.q[j] * (1.0 - nz.q[j]);
  }
  return grad;
}

RealGrid straight_through_grad(const RealGrid& upstream, const MaskSample& mask, const DesignWeights& d) {
  require_same_shape(upstream.shape, mask.bits.shape, "straight_through_grad");
  return probs_backward(d, upstream);
}

DesignWeights rescale_budget(const DesignWeights& d, double s_new) {
  require_budget(s_new, "rescale_budget");
  d.validate();
  return DesignWeights{d.raw, s_new};
}

MaskSample baseline_mask(const Shape& shape, double s, double center_fraction, Rng& rng) {
  const std::size_t n = shape_size(shape);
  if (!(s > 0.0 && s <= 1.0)) throw InvalidArgument("baseline_mask: budget must lie in (0, 1]");
  if (!(center_fraction >= 0.0)) throw InvalidArgument("baseline_mask: center_fraction must be non-negative");
  const auto total = static_cast<std::size_t>(std::llround(s * static_cast<double>(n)));
  const auto center = static_cast<std::size_t>(std::llround(center_fraction * static_cast<double>(n)));
  if (center > total)
    throw InvalidArgument("baseline_mask: center fraction " + std::to_string(center) +
                          " locations exceeds the budget of " + std::to_string(total));

  // Squared wrapped frequency radius of every location.
  std::vector<double> radius(n, 0.0);
  std::size_t stride = n;
  for (auto extent : shape) {
    stride /= extent;
    for (std::size_t i = 0; i < n; ++i) {
      const long f = signed_frequency((i / stride) % extent, extent);
      radius[i] += static_cast<double>(f * f);
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return radius[a] < radius[b]; });

  BitGrid bits(shape);
  for (std::size_t i = 0; i < center; ++i) bits.bits[order[i]] = 1;
  // Partial Fisher-Yates over the remaining locations.
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(center), order.end());
  std::sort(rest.begin(), rest.end());
  for (std::size_t i = 0; i < total - center; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(rest.size() - i));
    std::swap(rest[i], rest[j]);
    bits.bits[rest[i]] = 1;
  }
  return mask_from_bits(bits);
}

MaskSample mask_from_bits(const BitGrid& bits) {
  RealGrid probs(bits.shape);
  for (std::size_t i = 0; i < bits.size(); ++i) probs.data[i] = bits.bits[i] ? 1.0 : 0.0;
  return MaskSample{bits, probs};
}

ComplexGrid mask_apply(const BitGrid& bits, const ComplexGrid& y) {
  require_same_shape(bits.shape, y.shape, "mask_apply");
  ComplexGrid out(y.shape);
  for (std::size_t i = 0; i < y.size(); ++i) out.data[i] = bits.bits[i] ? y.data[i] : std::complex<double>(0.0, 0.0);
  return out;
}

ComplexGrid mask_apply(const MaskSample& m, const ComplexGrid& y) { return mask_apply(m.bits, y); }

BitGrid top_k_mask(const RealGrid& probs, std::size_t k) {
  if (k > probs.size()) throw InvalidArgument("top_k_mask: k exceeds the number of locations");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return probs.data[a] > probs.data[b]; });
  BitGrid bits(probs.shape);
  for (std::size_t i = 0; i < k; ++i) bits.bits[order[i]] = 1;
  return bits;
}

}  // namespace oedflow
