#include "oedflow/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>

#include <omp.h>

#include "oedflow/error.hpp"

namespace oedflow {

namespace {

void prepare(const FlowParams& params, std::span<const RealGrid> xs, std::span<const RealGrid> cs, BatchGradient& out) {
  if (xs.size() != cs.size()) throw InvalidArgument("batch_gradient: input and conditioning counts differ");
  out.params.assign(params.size(), 0.0);
  out.cond.resize(xs.size());
  for (std::size_t b = 0; b < xs.size(); ++b) out.cond[b].assign(cs[b].size(), 0.0);
  out.nll.assign(xs.size(), 0.0);
}

// Runs body(i) for i in [0, n) in parallel and rethrows the first failure.
template <class Body>
void parallel_items(std::size_t n, Body&& body) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(oedflow_kernel_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void batch_gradient_serial(const FlowParams& params, std::span<const RealGrid> xs, std::span<const RealGrid> cs,
                           BackwardMode mode, BatchGradient& out) {
  prepare(params, xs, cs, out);
  for (std::size_t b = 0; b < xs.size(); ++b)
    out.nll[b] = flow_backward_into(params, xs[b].data, cs[b].data, mode, out.params, out.cond[b]);
}

void batch_gradient_omp(const FlowParams& params, std::span<const RealGrid> xs, std::span<const RealGrid> cs,
                        BackwardMode mode, BatchGradient& out) {
  prepare(params, xs, cs, out);
  const std::size_t batch = xs.size();
  out.scratch.resize(batch);
  parallel_items(batch, [&](std::size_t b) {
    out.scratch[b].assign(params.size(), 0.0);
    out.nll[b] = flow_backward_into(params, xs[b].data, cs[b].data, mode, out.scratch[b], out.cond[b]);
  });
  // Sample-ordered reduction, parallel over parameters.
  const std::size_t n = params.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b) acc += out.scratch[b][static_cast<std::size_t>(i)];
    out.params[static_cast<std::size_t>(i)] = acc;
  }
}

std::vector<RealGrid> inverse_batch_serial(const FlowParams& params, std::span<const RealGrid> zs,
                                           std::span<const double> c) {
  std::vector<RealGrid> out;
  out.reserve(zs.size());
  for (const auto& z : zs) out.push_back(flow_inverse(params, z.data, c));
  return out;
}

std::vector<RealGrid> inverse_batch_omp(const FlowParams& params, std::span<const RealGrid> zs,
                                        std::span<const double> c) {
  std::vector<RealGrid> out(zs.size());
  parallel_items(zs.size(), [&](std::size_t j) { out[j] = flow_inverse(params, zs[j].data, c); });
  return out;
}

int worker_count() {
  if (const char* env = std::getenv("OED_THREADS")) {
    const int requested = std::atoi(env);
    if (requested > 0) return std::min(requested, omp_get_num_procs());
  }
  return omp_get_max_threads();
}

void apply_thread_limit() { omp_set_num_threads(worker_count()); }

}  // namespace oedflow
