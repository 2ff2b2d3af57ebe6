#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oedflow/grid.hpp"
#include "oedflow/rng.hpp"

namespace oedflow {

/// Layout of the conditional affine-coupling flow.
struct FlowConfig {
  std::size_t input_dim = 2;
  std::size_t cond_channels = 1;
  std::size_t num_blocks = 4;
  std::size_t hidden_width = 32;
  double log_scale_clamp = 2.0;

  std::size_t cond_dim() const noexcept { return cond_channels * input_dim; }
  void validate() const;
  bool operator==(const FlowConfig&) const = default;
};

/// Offsets of one coupling block inside the flat parameter vector.
///
/// Block l transforms the coordinates whose index parity equals l % 2
/// ("active") using a two-layer conditioner fed by the remaining coordinates
/// ("passive") followed by the conditioning vector:
///   h = tanh(W1 [x_p; c] + b1),  [raw; t] = W2 h + b2,
///   s = clamp * tanh(raw / clamp),  z_a = x_a * exp(s) + t.
struct BlockLayout {
  std::size_t parity = 0;
  std::size_t active = 0;   // number of active coordinates
  std::size_t passive = 0;  // number of passive coordinates
  std::size_t in_dim = 0;   // passive + cond_dim
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, end = 0;
};

class FlowParams {
 public:
  FlowParams() = default;
  /// All-zero parameters for the given layout.
  explicit FlowParams(const FlowConfig& cfg);

  const FlowConfig& config() const noexcept { return config_; }
  const BlockLayout& block(std::size_t l) const { return layout_.at(l); }
  std::size_t size() const noexcept { return values.size(); }

  std::vector<double> values;

  bool operator==(const FlowParams& o) const { return config_ == o.config_ && values == o.values; }

 private:
  FlowConfig config_;
  std::vector<BlockLayout> layout_;
};

/// Hidden weights ~ N(0, 1/fan_in), hidden biases zero, output layer exactly
/// zero: the initial flow is the identity with zero log-determinant.
FlowParams flow_init(const FlowConfig& cfg, Rng& rng);

struct FlowOutput {
  RealGrid z;
  double logdet = 0.0;
};

FlowOutput flow_forward(const FlowParams& params, std::span<const double> x, std::span<const double> c);
RealGrid flow_inverse(const FlowParams& params, std::span<const double> z, std::span<const double> c);

/// -log p(x | c) including the (n/2) log(2 pi) normalizer.
double flow_nll(const FlowParams& params, std::span<const double> x, std::span<const double> c);

enum class BackwardMode { Stored, Invertible };

struct BackwardStats {
  /// Largest number of per-block activation sets alive at once.
  std::size_t peak_activation_sets = 0;
};

struct FlowGradient {
  std::vector<double> params;  // d nll / d theta
  std::vector<double> cond;    // d nll / d c
  double nll = 0.0;
  BackwardStats stats;
};

FlowGradient flow_backward(const FlowParams& params, std::span<const double> x, std::span<const double> c,
                           BackwardMode mode);

/// Accumulating form used by the batch kernels: adds d nll / d theta into
/// grad_params, writes d nll / d c into grad_cond, returns nll.
double flow_backward_into(const FlowParams& params, std::span<const double> x, std::span<const double> c,
                          BackwardMode mode, std::span<double> grad_params, std::span<double> grad_cond,
                          BackwardStats* stats = nullptr);

}  // namespace oedflow
