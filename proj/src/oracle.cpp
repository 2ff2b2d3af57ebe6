#include "oedflow/oracle.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <omp.h>

#include "oedflow/error.hpp"

namespace oedflow {

namespace {

void require_noise(const LinearGaussianModel& model) {
  if (!(model.sigma > 0.0)) throw InvalidArgument("oracle: noise-free models have no finite posterior density");
}

Matrix selected_rows(const LinearGaussianModel& model, const BitGrid& mask) {
  require_noise(model);
  if (mask.shape != Shape{model.measurements()}) throw InvalidArgument("oracle: mask does not match the operator rows");
  Matrix b(static_cast<Eigen::Index>(mask.count()), model.op.cols());
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask.bits[k]) b.row(r++) = model.op.row(static_cast<Eigen::Index>(k));
  return b;
}

Matrix posterior_precision(const LinearGaussianModel& model, const Matrix& b) {
  Matrix prec = inverse_spd(model.prior_cov);
  if (b.rows() > 0) prec += b.transpose() * b / (model.sigma * model.sigma);
  return 0.5 * (prec + prec.transpose());
}

// Advances a sorted k-subset of {0..m-1} to its lexicographic successor.
bool next_combination(std::vector<std::size_t>& idx, std::size_t m) {
  const std::size_t k = idx.size();
  for (std::size_t i = k; i-- > 0;) {
    if (idx[i] < m - k + i) {
      ++idx[i];
      for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

// The rank-th k-subset of {0..m-1} in lexicographic order.
std::vector<std::size_t> unrank_combination(std::uint64_t rank, std::size_t m, std::size_t k) {
  std::vector<std::size_t> idx;
  std::size_t next = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t v = next;; ++v) {
      const std::uint64_t block = binomial_count(m - v - 1, k - i - 1);
      if (rank < block) {
        idx.push_back(v);
        next = v + 1;
        break;
      }
      rank -= block;
    }
  }
  return idx;
}

// EIG of a row subset via the determinant lemma: 1/2 log det(I + K_SS),
// K = A Sigma A^T / sigma^2.
struct SubsetEig {
  Matrix gram;
  double operator()(const std::vector<std::size_t>& idx) const {
    const auto k = static_cast<Eigen::Index>(idx.size());
    if (k == 0) return 0.0;
    Matrix sub(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = gram(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j]));
    sub += Matrix::Identity(k, k);
    return 0.5 * logdet_spd(sub);
  }
};

struct Best {
  std::vector<std::size_t> idx;
  double eig = -1.0;
  std::uint64_t evaluated = 0;
};

Best search_range(const SubsetEig& eig, std::size_t m, std::size_t k, std::uint64_t begin, std::uint64_t end) {
  Best best;
  if (begin >= end) return best;
  auto idx = unrank_combination(begin, m, k);
  for (std::uint64_t r = begin; r < end; ++r) {
    const double v = eig(idx);
    ++best.evaluated;
    if (best.evaluated == 1 || v > best.eig) {
      best.idx = idx;
      best.eig = v;
    }
    if (r + 1 < end) next_combination(idx, m);
  }
  return best;
}

BruteForceResult finish(const LinearGaussianModel& model, const Best& best, std::uint64_t evaluated) {
  BruteForceResult out{BitGrid({model.measurements()}), 0.0, evaluated};
  for (auto i : best.idx) out.mask.bits[i] = 1;
  out.eig = eig_analytic(model, out.mask);
  return out;
}

std::uint64_t checked_count(const LinearGaussianModel& model, std::size_t k) {
  const std::size_t m = model.measurements();
  if (k > m) throw InvalidArgument("brute_force_best_mask: k exceeds the number of measurements");
  const auto count = binomial_count(m, k);
  if (count > kBruteForceLimit)
    throw InvalidArgument("brute_force_best_mask: " + std::to_string(count) + " candidate masks exceeds the limit of " +
                          std::to_string(kBruteForceLimit));
  return count;
}

SubsetEig make_subset_eig(const LinearGaussianModel& model) {
  require_noise(model);
  const double s2 = model.sigma * model.sigma;
  return SubsetEig{model.op * model.prior_cov * model.op.transpose() / s2};
}

FlowEigEstimate estimate_with(const FlowParams& params, const ForwardModel& model, const DataSource& data,
                              std::size_t num_samples, Rng& rng, const std::function<BitGrid(Rng&)>& next_mask) {
  if (num_samples < 1) throw InvalidArgument("flow_eig_estimate: num_samples must be >= 1");
  const auto* lg = std::get_if<LinearGaussianModel>(&model);
  Rng mask_rng = rng.split("mask");
  Rng data_rng = rng.split("data");
  Rng noise_rng = rng.split("noise");
  double sum = 0.0, sum_sq = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < num_samples; ++i) {
    const BitGrid mask = next_mask(mask_rng);
    const auto x = data.draw(data_rng);
    const auto pair = observe(model, x, noise_rng);
    const auto c = conditioning_field(model, mask, pair.y);
    const double nll = flow_nll(params, pair.x.data, c.data);
    sum += nll;
    sum_sq += nll * nll;
    if (lg) ref += eig_analytic(*lg, mask);
  }
  rng.next_u64();  // the caller's stream moves on
  const double n = static_cast<double>(num_samples);
  FlowEigEstimate out;
  out.samples = num_samples;
  out.mean_nll = sum / n;
  const double var = num_samples > 1 ? std::max(0.0, (sum_sq - n * out.mean_nll * out.mean_nll) / (n - 1.0)) : 0.0;
  out.stderr_ = std::sqrt(var / n);
  out.value = -out.mean_nll;
  if (lg && data.is_prior()) {
    out.value += prior_entropy(*lg);
    out.prior_entropy_included = true;
    out.reference_eig = ref / n;
  }
  return out;
}

}  // namespace

GaussianPosterior gaussian_posterior(const LinearGaussianModel& model, const BitGrid& mask, std::span<const double> y) {
  if (y.size() != model.measurements()) throw InvalidArgument("gaussian_posterior: observation size mismatch");
  require_finite(y, "gaussian_posterior observation");
  const Matrix b = selected_rows(model, mask);
  GaussianPosterior post;
  post.cov = inverse_spd(posterior_precision(model, b));
  Vector rhs = Vector::Zero(static_cast<Eigen::Index>(model.dim()));
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask.bits[k]) rhs += b.row(r++).transpose() * y[k];
  post.mean = post.cov * rhs / (model.sigma * model.sigma);
  return post;
}

double eig_analytic(const LinearGaussianModel& model, const BitGrid& mask) {
  const Matrix b = selected_rows(model, mask);
  if (b.rows() == 0) return 0.0;
  const Matrix post_cov = inverse_spd(posterior_precision(model, b));
  return 0.5 * (logdet_spd(model.prior_cov) - logdet_spd(post_cov));
}

double prior_entropy(const LinearGaussianModel& model) {
  const double n = static_cast<double>(model.dim());
  return 0.5 * (logdet_spd(model.prior_cov) + n * std::log(2.0 * std::numbers::pi * std::numbers::e));
}

McEstimate eig_via_expected_loglik(const LinearGaussianModel& model, const BitGrid& mask, std::size_t num_samples,
                                   Rng& rng) {
  if (num_samples < 1) throw InvalidArgument("eig_via_expected_loglik: num_samples must be >= 1");
  const Matrix b = selected_rows(model, mask);
  const Matrix precision = posterior_precision(model, b);
  const Matrix post_cov = inverse_spd(precision);
  const Matrix gain = post_cov * model.op.transpose() / (model.sigma * model.sigma);
  const double n = static_cast<double>(model.dim());
  const double log_norm = -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet_spd(post_cov));

  double sum = 0.0, sum_sq = 0.0;
  Vector masked(static_cast<Eigen::Index>(model.measurements()));
  for (std::size_t s = 0; s < num_samples; ++s) {
    const auto pair = simulate_pair(model, rng);
    for (std::size_t k = 0; k < mask.size(); ++k) masked(k) = mask.bits[k] ? pair.y.data[k].real() : 0.0;
    const Vector d = Eigen::Map<const Vector>(pair.x.data.data(), static_cast<Eigen::Index>(model.dim())) - gain * masked;
    const double loglik = log_norm - 0.5 * d.dot(precision * d);
    sum += loglik;
    sum_sq += loglik * loglik;
  }
  const double count = static_cast<double>(num_samples);
  const double mean = sum / count;
  const double var = num_samples > 1 ? std::max(0.0, (sum_sq - count * mean * mean) / (count - 1.0)) : 0.0;
  return McEstimate{mean + prior_entropy(model), std::sqrt(var / count), num_samples};
}

std::uint64_t binomial_count(std::uint64_t m, std::uint64_t k) {
  if (k > m) return 0;
  k = std::min(k, m - k);
  unsigned __int128 c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    c = c * (m - k + i) / i;
    if (c > UINT64_MAX) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(c);
}

BruteForceResult brute_force_best_mask_serial(const LinearGaussianModel& model, std::size_t k) {
  const auto count = checked_count(model, k);
  const auto eig = make_subset_eig(model);
  return finish(model, search_range(eig, model.measurements(), k, 0, count), count);
}

BruteForceResult brute_force_best_mask_omp(const LinearGaussianModel& model, std::size_t k) {
  const auto count = checked_count(model, k);
  const auto eig = make_subset_eig(model);
  const std::size_t m = model.measurements();
  // Fixed chunking independent of the thread count; chunks reduce in rank order.
  constexpr std::uint64_t kChunk = 4096;
  const std::uint64_t chunks = (count + kChunk - 1) / kChunk;
  std::vector<Best> partial(chunks);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
    const std::uint64_t begin = static_cast<std::uint64_t>(c) * kChunk;
    partial[c] = search_range(eig, m, k, begin, std::min(count, begin + kChunk));
  }
  Best best = partial.front();
  for (std::size_t c = 1; c < partial.size(); ++c)
    if (partial[c].eig > best.eig) best = partial[c];
  return finish(model, best, count);
}

BruteForceResult brute_force_best_mask(const LinearGaussianModel& model, std::size_t k) {
  return brute_force_best_mask_omp(model, k);
}

FlowEigEstimate flow_eig_estimate(const FlowParams& params, const DesignWeights& design, const ForwardModel& model,
                                  const DataSource& data, std::size_t num_samples, Rng& rng) {
  const RealGrid probs = weights_to_probs(design);
  return estimate_with(params, model, data, num_samples, rng,
                       [&](Rng& r) { return sample_mask_from_probs(probs, r).bits; });
}

FlowEigEstimate flow_eig_estimate(const FlowParams& params, const BitGrid& mask, const ForwardModel& model,
                                  const DataSource& data, std::size_t num_samples, Rng& rng) {
  return estimate_with(params, model, data, num_samples, rng, [&](Rng&) { return mask; });
}

}  // namespace oedflow
