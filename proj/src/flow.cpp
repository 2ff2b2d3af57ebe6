#include "oedflow/flow.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "oedflow/error.hpp"

namespace oedflow {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Coordinate i is active in block l when i % 2 == l % 2.
inline std::size_t active_index(const BlockLayout& b, std::size_t j) { return 2 * j + b.parity; }
inline std::size_t passive_index(const BlockLayout& b, std::size_t k) { return 2 * k + (1 - b.parity); }

struct Activations {
  std::vector<double> in;  // [x_p; c]
  std::vector<double> h;   // tanh hidden layer
  std::vector<double> s;   // clamped log-scales
  std::vector<double> t;   // shifts
};

void conditioner(const FlowParams& p, const BlockLayout& b, std::span<const double> x, std::span<const double> c,
                 Activations& act) {
  const std::size_t hidden = p.config().hidden_width;
  const double clamp = p.config().log_scale_clamp;
  act.in.resize(b.in_dim);
  for (std::size_t k = 0; k < b.passive; ++k) act.in[k] = x[passive_index(b, k)];
  std::copy(c.begin(), c.end(), act.in.begin() + static_cast<std::ptrdiff_t>(b.passive));

  const double* w1 = p.values.data() + b.w1;
  const double* b1 = p.values.data() + b.b1;
  act.h.resize(hidden);
  for (std::size_t r = 0; r < hidden; ++r)
    act.h[r] = std::tanh(b1[r] + dot({w1 + r * b.in_dim, b.in_dim}, act.in));

  const double* w2 = p.values.data() + b.w2;
  const double* b2 = p.values.data() + b.b2;
  act.s.resize(b.active);
  act.t.resize(b.active);
  for (std::size_t j = 0; j < b.active; ++j) {
    const double raw = b2[j] + dot({w2 + j * hidden, hidden}, act.h);
    act.s[j] = clamp * std::tanh(raw / clamp);
    act.t[j] = b2[b.active + j] + dot({w2 + (b.active + j) * hidden, hidden}, act.h);
  }
}

void check_inputs(const FlowParams& p, std::span<const double> x, std::span<const double> c) {
  const auto& cfg = p.config();
  if (x.size() != cfg.input_dim)
    throw InvalidArgument("flow: input has " + std::to_string(x.size()) + " entries, expected " +
                          std::to_string(cfg.input_dim));
  if (c.size() != cfg.cond_dim())
    throw InvalidArgument("flow: conditioning has " + std::to_string(c.size()) + " entries, expected " +
                          std::to_string(cfg.cond_dim()));
  require_finite(x, "flow input");
  require_finite(c, "flow conditioning");
}

void check_block(std::span<const double> x, double logdet, std::size_t l) {
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericalError("flow: non-finite activation after block " + std::to_string(l));
  }
  if (!std::isfinite(logdet)) throw NumericalError("flow: non-finite log-determinant after block " + std::to_string(l));
}

// In-place forward of one block; returns the block's log-determinant.
double block_forward(const FlowParams& p, const BlockLayout& b, std::span<double> x, std::span<const double> c,
                     Activations& act) {
  conditioner(p, b, x, c, act);
  double logdet = 0.0;
  for (std::size_t j = 0; j < b.active; ++j) {
    const std::size_t i = active_index(b, j);
    x[i] = x[i] * std::exp(act.s[j]) + act.t[j];
    logdet += act.s[j];
  }
  return logdet;
}

// In-place inverse of one block; leaves the activations of the recovered input in act.
void block_inverse(const FlowParams& p, const BlockLayout& b, std::span<double> y, std::span<const double> c,
                   Activations& act) {
  conditioner(p, b, y, c, act);  // passive half is unchanged by the block
  for (std::size_t j = 0; j < b.active; ++j) {
    const std::size_t i = active_index(b, j);
    y[i] = (y[i] - act.t[j]) * std::exp(-act.s[j]);
  }
}

// g holds dL/d(block output) on entry and dL/d(block input) on exit, where
// L = nll and the block contributes -sum(s) to L. x_in is the block input.
void block_backward(const FlowParams& p, const BlockLayout& b, std::span<const double> x_in, const Activations& act,
                    std::span<double> g, std::span<double> grad_params, std::span<double> grad_cond,
                    std::vector<double>& d_out, std::vector<double>& d_pre) {
  const std::size_t hidden = p.config().hidden_width;
  const double clamp = p.config().log_scale_clamp;
  d_out.assign(2 * b.active, 0.0);
  for (std::size_t j = 0; j < b.active; ++j) {
    const std::size_t i = active_index(b, j);
    const double e = std::exp(act.s[j]);
    const double ga = g[i];
    const double ds = ga * x_in[i] * e - 1.0;
    const double ratio = act.s[j] / clamp;
    d_out[j] = ds * (1.0 - ratio * ratio);
    d_out[b.active + j] = ga;
    g[i] = ga * e;
  }

  const double* w2 = p.values.data() + b.w2;
  double* gw2 = grad_params.data() + b.w2;
  double* gb2 = grad_params.data() + b.b2;
  d_pre.assign(hidden, 0.0);
  for (std::size_t r = 0; r < 2 * b.active; ++r) {
    const double d = d_out[r];
    gb2[r] += d;
    double* gw2_row = gw2 + r * hidden;
    const double* w2_row = w2 + r * hidden;
    for (std::size_t q = 0; q < hidden; ++q) {
      gw2_row[q] += d * act.h[q];
      d_pre[q] += d * w2_row[q];
    }
  }
  for (std::size_t q = 0; q < hidden; ++q) d_pre[q] *= 1.0 - act.h[q] * act.h[q];

  const double* w1 = p.values.data() + b.w1;
  double* gw1 = grad_params.data() + b.w1;
  double* gb1 = grad_params.data() + b.b1;
  // dL/d[x_p; c] accumulated into a scratch the size of in_dim
  thread_local std::vector<double> d_in;
  d_in.assign(b.in_dim, 0.0);
  for (std::size_t q = 0; q < hidden; ++q) {
    const double d = d_pre[q];
    gb1[q] += d;
    if (d == 0.0) continue;
    double* gw1_row = gw1 + q * b.in_dim;
    const double* w1_row = w1 + q * b.in_dim;
    for (std::size_t k = 0; k < b.in_dim; ++k) {
      gw1_row[k] += d * act.in[k];
      d_in[k] += d * w1_row[k];
    }
  }
  for (std::size_t k = 0; k < b.passive; ++k) g[passive_index(b, k)] += d_in[k];
  for (std::size_t k = 0; k < grad_cond.size(); ++k) grad_cond[k] += d_in[b.passive + k];
}

}  // namespace

void FlowConfig::validate() const {
  if (input_dim < 2) throw InvalidArgument("flow config: input_dim must be >= 2");
  if (cond_channels < 1) throw InvalidArgument("flow config: cond_channels must be >= 1");
  if (num_blocks < 1) throw InvalidArgument("flow config: num_blocks must be >= 1");
  if (hidden_width < 1) throw InvalidArgument("flow config: hidden_width must be >= 1");
  if (!(log_scale_clamp > 0.0) || !std::isfinite(log_scale_clamp))
    throw InvalidArgument("flow config: log_scale_clamp must be positive");
}

FlowParams::FlowParams(const FlowConfig& cfg) : config_(cfg) {
  cfg.validate();
  std::size_t offset = 0;
  const std::size_t hidden = cfg.hidden_width;
  for (std::size_t l = 0; l < cfg.num_blocks; ++l) {
    BlockLayout b;
    b.parity = l % 2;
    b.active = b.parity == 0 ? (cfg.input_dim + 1) / 2 : cfg.input_dim / 2;
    b.passive = cfg.input_dim - b.active;
    b.in_dim = b.passive + cfg.cond_dim();
    b.w1 = offset;
    b.b1 = b.w1 + hidden * b.in_dim;
    b.w2 = b.b1 + hidden;
    b.b2 = b.w2 + 2 * b.active * hidden;
    b.end = b.b2 + 2 * b.active;
    offset = b.end;
    layout_.push_back(b);
  }
  values.assign(offset, 0.0);
}

FlowParams flow_init(const FlowConfig& cfg, Rng& rng) {
  FlowParams p(cfg);
  for (std::size_t l = 0; l < cfg.num_blocks; ++l) {
    const auto& b = p.block(l);
    const double scale = 1.0 / std::sqrt(static_cast<double>(b.in_dim));
    gauss_fill(rng, std::span<double>(p.values).subspan(b.w1, b.b1 - b.w1));
    for (std::size_t i = b.w1; i < b.b1; ++i) p.values[i] *= scale;
  }
  return p;
}

FlowOutput flow_forward(const FlowParams& params, std::span<const double> x, std::span<const double> c) {
  check_inputs(params, x, c);
  FlowOutput out{RealGrid({x.size()}, std::vector<double>(x.begin(), x.end())), 0.0};
  Activations act;
  for (std::size_t l = 0; l < params.config().num_blocks; ++l) {
    out.logdet += block_forward(params, params.block(l), out.z.data, c, act);
    check_block(out.z.data, out.logdet, l);
  }
  return out;
}

RealGrid flow_inverse(const FlowParams& params, std::span<const double> z, std::span<const double> c) {
  check_inputs(params, z, c);
  RealGrid x({z.size()}, std::vector<double>(z.begin(), z.end()));
  Activations act;
  for (std::size_t l = params.config().num_blocks; l-- > 0;) {
    block_inverse(params, params.block(l), x.data, c, act);
    check_block(x.data, 0.0, l);
  }
  return x;
}

double flow_nll(const FlowParams& params, std::span<const double> x, std::span<const double> c) {
  const auto out = flow_forward(params, x, c);
  return 0.5 * squared_norm(out.z.data) - out.logdet + static_cast<double>(x.size()) * kHalfLog2Pi;
}

double flow_backward_into(const FlowParams& params, std::span<const double> x, std::span<const double> c,
                          BackwardMode mode, std::span<double> grad_params, std::span<double> grad_cond,
                          BackwardStats* stats) {
  check_inputs(params, x, c);
  if (grad_params.size() != params.size() || grad_cond.size() != c.size())
    throw InvalidArgument("flow_backward: gradient buffer size mismatch");
  const std::size_t n = x.size();
  const std::size_t blocks = params.config().num_blocks;
  std::fill(grad_cond.begin(), grad_cond.end(), 0.0);

  std::vector<double> y(x.begin(), x.end());
  std::vector<double> d_out, d_pre;
  double logdet = 0.0;
  double nll = 0.0;

  if (mode == BackwardMode::Stored) {
    std::vector<std::vector<double>> inputs(blocks);
    std::vector<Activations> acts(blocks);
    for (std::size_t l = 0; l < blocks; ++l) {
      inputs[l] = y;
      logdet += block_forward(params, params.block(l), y, c, acts[l]);
      check_block(y, logdet, l);
    }
    nll = 0.5 * squared_norm(y) - logdet + static_cast<double>(n) * kHalfLog2Pi;
    std::vector<double>& g = y;  // dL/dz = z
    for (std::size_t l = blocks; l-- > 0;)
      block_backward(params, params.block(l), inputs[l], acts[l], g, grad_params, grad_cond, d_out, d_pre);
    if (stats) stats->peak_activation_sets = blocks;
  } else {
    Activations act;
    for (std::size_t l = 0; l < blocks; ++l) {
      logdet += block_forward(params, params.block(l), y, c, act);
      check_block(y, logdet, l);
    }
    nll = 0.5 * squared_norm(y) - logdet + static_cast<double>(n) * kHalfLog2Pi;
    std::vector<double> g = y;
    // Walk back through the blocks, reconstructing each input from its output.
    for (std::size_t l = blocks; l-- > 0;) {
      block_inverse(params, params.block(l), y, c, act);
      block_backward(params, params.block(l), y, act, g, grad_params, grad_cond, d_out, d_pre);
    }
    if (stats) stats->peak_activation_sets = 1;
  }
  if (!std::isfinite(nll)) throw NumericalError("flow_backward: non-finite nll");
  return nll;
}

FlowGradient flow_backward(const FlowParams& params, std::span<const double> x, std::span<const double> c,
                           BackwardMode mode) {
  FlowGradient out;
  out.params.assign(params.size(), 0.0);
  out.cond.assign(c.size(), 0.0);
  out.nll = flow_backward_into(params, x, c, mode, out.params, out.cond, &out.stats);
  return out;
}

}  // namespace oedflow
