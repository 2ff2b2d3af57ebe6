#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "oedflow/design.hpp"
#include "oedflow/flow.hpp"
#include "oedflow/linalg.hpp"
#include "oedflow/models.hpp"

namespace oedflow {

struct GaussianPosterior {
  Vector mean;
  Matrix cov;
};

/// Conjugate update with the rows of the operator selected by mask:
/// cov = (Sigma^-1 + B^T B / sigma^2)^-1, mean = cov B^T y_sel / sigma^2.
/// y holds all measurements; unselected entries are ignored.
GaussianPosterior gaussian_posterior(const LinearGaussianModel& model, const BitGrid& mask, std::span<const double> y);

/// 1/2 (log det Sigma - log det Sigma_post).
double eig_analytic(const LinearGaussianModel& model, const BitGrid& mask);

/// Differential entropy of the prior, 1/2 log det(2 pi e Sigma).
double prior_entropy(const LinearGaussianModel& model);

struct McEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

/// Monte Carlo E_{x,y}[log p(x | y)] under the exact Gaussian posterior, plus
/// the prior entropy. Its expectation is eig_analytic.
McEstimate eig_via_expected_loglik(const LinearGaussianModel& model, const BitGrid& mask, std::size_t num_samples,
                                   Rng& rng);

/// Saturating binomial coefficient.
std::uint64_t binomial_count(std::uint64_t m, std::uint64_t k);

constexpr std::uint64_t kBruteForceLimit = 1'000'000;

struct BruteForceResult {
  BitGrid mask;
  double eig = 0.0;
  std::uint64_t evaluated = 0;
};

/// Exhaustive search over all k-of-m row selections. Candidates are visited in
/// lexicographic order of their index sets; the first maximum wins.
BruteForceResult brute_force_best_mask(const LinearGaussianModel& model, std::size_t k);
BruteForceResult brute_force_best_mask_serial(const LinearGaussianModel& model, std::size_t k);
BruteForceResult brute_force_best_mask_omp(const LinearGaussianModel& model, std::size_t k);

struct FlowEigEstimate {
  double value = 0.0;         // -mean nll (+ prior entropy when available)
  double stderr_ = 0.0;
  double mean_nll = 0.0;
  bool prior_entropy_included = false;
  std::optional<double> reference_eig;  // mean eig_analytic over the masks used
  std::size_t samples = 0;
};

/// Learned lower bound on the EIG: fresh pairs, a fresh mask per pair drawn
/// from the design.
FlowEigEstimate flow_eig_estimate(const FlowParams& params, const DesignWeights& design, const ForwardModel& model,
                                  const DataSource& data, std::size_t num_samples, Rng& rng);
/// Same estimate with one fixed mask for every pair.
FlowEigEstimate flow_eig_estimate(const FlowParams& params, const BitGrid& mask, const ForwardModel& model,
                                  const DataSource& data, std::size_t num_samples, Rng& rng);

}  // namespace oedflow
