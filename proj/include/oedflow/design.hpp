#pragma once

#include "oedflow/grid.hpp"
#include "oedflow/rng.hpp"

namespace oedflow {

/// Unconstrained design field plus sampling budget s in (0, 1).
struct DesignWeights {
  RealGrid raw;
  double budget = 0.025;

  void validate() const;
  bool operator==(const DesignWeights&) const = default;
};

struct MaskSample {
  BitGrid bits;
  RealGrid probs;
};

/// q = sigmoid(raw); p = clamp(s * q / mean(q), 0, 1).
RealGrid weights_to_probs(const DesignWeights& d);

/// bits_i = 1 iff u_i < p_i, u_i ~ U(0, 1).
MaskSample sample_mask(const DesignWeights& d, Rng& rng);
MaskSample sample_mask_from_probs(const RealGrid& probs, Rng& rng);

/// d Loss / d raw given d Loss / d p, differentiating the sigmoid and the
/// mean normalization exactly. Entries clamped at 1 pass no gradient.
RealGrid probs_backward(const DesignWeights& d, const RealGrid& upstream);

/// Pass-through estimator: treats the sampled indicator as the identity, so
/// d Loss / d bits is forwarded to p and from there to raw.
RealGrid straight_through_grad(const RealGrid& upstream, const MaskSample& mask, const DesignWeights& d);

/// Same raw weights under a new budget; unclamped probabilities scale by s_new / s.
DesignWeights rescale_budget(const DesignWeights& d, double s_new);

/// Fixed hand-crafted mask: the round(center_fraction * N) lowest-frequency
/// locations (wrapped distance to DC, ties by index) plus uniformly random
/// other locations up to round(s * N) ones in total.
MaskSample baseline_mask(const Shape& shape, double s, double center_fraction, Rng& rng);

/// Bits as a deterministic probability grid (0 or 1).
MaskSample mask_from_bits(const BitGrid& bits);

ComplexGrid mask_apply(const MaskSample& m, const ComplexGrid& y);
ComplexGrid mask_apply(const BitGrid& bits, const ComplexGrid& y);

/// Indices of the k largest probabilities (ties by index) as a mask.
BitGrid top_k_mask(const RealGrid& probs, std::size_t k);

}  // namespace oedflow
