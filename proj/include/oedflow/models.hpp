#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "oedflow/grid.hpp"
#include "oedflow/linalg.hpp"
#include "oedflow/rng.hpp"

namespace oedflow {

/// x ~ N(0, prior_cov), y = op x + sigma * xi with real observations.
struct LinearGaussianModel {
  Matrix prior_cov;
  Matrix op;
  double sigma = 1.0;
  Matrix prior_chol;  // lower Cholesky factor of prior_cov

  static LinearGaussianModel make(Matrix prior_cov, Matrix op, double sigma);
  std::size_t dim() const noexcept { return static_cast<std::size_t>(prior_cov.rows()); }
  std::size_t measurements() const noexcept { return static_cast<std::size_t>(op.rows()); }
};

/// Single-coil Cartesian MRI: y = F x + noise with F the unitary 2D DFT and
/// complex noise of variance sigma^2 per entry (sigma^2 / 2 per channel).
struct FourierModel {
  std::size_t height = 16;
  std::size_t width = 16;
  double sigma = 0.0;

  static FourierModel make(std::size_t height, std::size_t width, double sigma);
  std::size_t dim() const noexcept { return height * width; }
};

using ForwardModel = std::variant<LinearGaussianModel, FourierModel>;

struct TrainPair {
  RealGrid x;     // ground truth
  ComplexGrid y;  // full noisy observation, before masking
};

/// Counts adjoint-operator applications when passed to conditioning_field.
struct OperatorCounter {
  std::size_t adjoint_calls = 0;
};

Shape image_shape(const ForwardModel& m);
Shape measurement_shape(const ForwardModel& m);
std::size_t cond_channels(const ForwardModel& m);
std::size_t image_dim(const ForwardModel& m);

/// Prior draw followed by a noisy observation, both from rng.
TrainPair simulate_pair(const LinearGaussianModel& m, Rng& rng);
/// Noisy observation of a given ground truth.
TrainPair observe(const ForwardModel& m, const RealGrid& x, Rng& noise_rng);
RealGrid prior_sample(const LinearGaussianModel& m, Rng& rng);

/// A^T (mask . y). Fourier: shape {2, h, w} holding re/im of the adjoint
/// image. Linear-Gaussian: shape {1, n}.
RealGrid conditioning_field(const ForwardModel& m, const BitGrid& mask, const ComplexGrid& y,
                            OperatorCounter* counter = nullptr);

/// Pullback of d Loss / d c to d Loss / d bits, where c = conditioning_field(bits, y).
RealGrid conditioning_bits_grad(const ForwardModel& m, const ComplexGrid& y, std::span<const double> grad_cond);

/// Where training ground truths come from: the analytic prior (linear-Gaussian)
/// or a finite image set sampled with replacement.
class DataSource {
 public:
  static DataSource from_prior(const LinearGaussianModel& m);
  static DataSource from_images(std::vector<RealGrid> images);

  RealGrid draw(Rng& rng) const;
  bool is_prior() const noexcept { return prior_.has_value(); }
  const std::vector<RealGrid>& images() const noexcept { return images_; }

 private:
  std::optional<LinearGaussianModel> prior_;
  std::vector<RealGrid> images_;
};

/// Gaussian random fields by spectral synthesis with amplitude
/// (1 + |k|)^(-beta / 2); each image normalized to zero mean, unit variance.
std::vector<RealGrid> grf_dataset(const Shape& extents, double beta, std::size_t count, Rng& rng);

/// 3 to 8 axis-aligned ellipses per image, twice as tall as wide on average,
/// with random positive intensities summed and clipped to [0, 1].
std::vector<RealGrid> phantom_dataset(const Shape& extents, std::size_t count, Rng& rng);

}  // namespace oedflow
