#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "oedflow/eval.hpp"
#include "oedflow/kernels.hpp"

using namespace oedflow;

namespace {

struct ThreadScope {
  explicit ThreadScope(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadScope() { omp_set_num_threads(saved); }
  int saved;
};

}  // namespace

TEST_CASE("batch gradient: OpenMP matches the serial reference bit for bit") {
  Rng rng(1);
  FlowParams p = flow_init({10, 2, 4, 12}, rng);
  for (auto& v : p.values) v += 0.2 * rng.normal();
  std::vector<RealGrid> xs, cs;
  for (int i = 0; i < 23; ++i) {
    xs.push_back(gauss_sample(rng, {10}));
    cs.push_back(gauss_sample(rng, {2, 10}));
  }
  for (auto mode : {BackwardMode::Stored, BackwardMode::Invertible}) {
    BatchGradient serial;
    batch_gradient_serial(p, xs, cs, mode, serial);
    for (int threads : {1, 3, 8}) {
      ThreadScope scope(threads);
      BatchGradient par;
      batch_gradient_omp(p, xs, cs, mode, par);
      CHECK(par.params == serial.params);
      CHECK(par.cond == serial.cond);
      CHECK(par.nll == serial.nll);
    }
  }
}

TEST_CASE("inverse batch and posterior sampling agree across schedules") {
  Rng rng(2);
  FlowParams p = flow_init({6, 1, 3, 8}, rng);
  for (auto& v : p.values) v += 0.2 * rng.normal();
  std::vector<RealGrid> zs;
  for (int i = 0; i < 40; ++i) zs.push_back(gauss_sample(rng, {6}));
  const std::vector<double> c(6, 0.5);
  const auto serial = inverse_batch_serial(p, zs, c);
  for (int threads : {1, 4}) {
    ThreadScope scope(threads);
    CHECK(inverse_batch_omp(p, zs, c) == serial);
    Rng a(3), b(3);
    CHECK(posterior_sample(p, RealGrid({1, 6}, 0.5), a, 17).samples ==
          posterior_sample_serial(p, RealGrid({1, 6}, 0.5), b, 17).samples);
  }
}

TEST_CASE("errors inside parallel regions propagate") {
  Rng rng(4);
  const FlowParams p = flow_init({4, 1, 2, 4}, rng);
  std::vector<RealGrid> xs{RealGrid({4}), RealGrid({4}, std::nan(""))}, cs{RealGrid({1, 4}), RealGrid({1, 4})};
  BatchGradient g;
  ThreadScope scope(2);
  CHECK_THROWS_AS(batch_gradient_omp(p, xs, cs, BackwardMode::Stored, g), NumericalError);
}

TEST_CASE("worker count honours OED_THREADS") {
  setenv("OED_THREADS", "3", 1);
  CHECK(worker_count() == std::min(3, omp_get_num_procs()));
  setenv("OED_THREADS", "junk", 1);
  CHECK(worker_count() >= 1);
  unsetenv("OED_THREADS");
  CHECK(worker_count() >= 1);
}
