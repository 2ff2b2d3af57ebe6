#pragma once

// Data-parallel kernels. Each has a serial reference and an OpenMP version
// that must agree bit for bit: per-item work is independent and every
// reduction runs in item order, whatever the thread count.

#include <span>
#include <vector>

#include "oedflow/flow.hpp"
#include "oedflow/grid.hpp"

namespace oedflow {

struct BatchGradient {
  std::vector<double> params;             // sum over the batch of d nll / d theta
  std::vector<std::vector<double>> cond;  // per-sample d nll / d c
  std::vector<double> nll;                // per-sample nll
  std::vector<std::vector<double>> scratch;
};

void batch_gradient_serial(const FlowParams& params, std::span<const RealGrid> xs, std::span<const RealGrid> cs,
                           BackwardMode mode, BatchGradient& out);
void batch_gradient_omp(const FlowParams& params, std::span<const RealGrid> xs, std::span<const RealGrid> cs,
                        BackwardMode mode, BatchGradient& out);

/// x_j = f^{-1}(z_j; c) for every latent draw.
std::vector<RealGrid> inverse_batch_serial(const FlowParams& params, std::span<const RealGrid> zs,
                                           std::span<const double> c);
std::vector<RealGrid> inverse_batch_omp(const FlowParams& params, std::span<const RealGrid> zs,
                                        std::span<const double> c);

/// Worker count: OED_THREADS when set and positive, else the OpenMP default.
int worker_count();
void apply_thread_limit();

}  // namespace oedflow
