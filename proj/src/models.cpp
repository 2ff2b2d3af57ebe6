#include "oedflow/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oedflow/design.hpp"
#include "oedflow/error.hpp"
#include "oedflow/fft.hpp"

namespace oedflow {

LinearGaussianModel LinearGaussianModel::make(Matrix prior_cov, Matrix op, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("linear-Gaussian model: sigma must be >= 0");
  if (op.cols() != prior_cov.rows()) throw InvalidArgument("linear-Gaussian model: operator width != prior dimension");
  if (op.rows() == 0 || !op.allFinite()) throw InvalidArgument("linear-Gaussian model: invalid operator");
  LinearGaussianModel m;
  m.prior_chol = cholesky_lower(prior_cov);
  m.prior_cov = std::move(prior_cov);
  m.op = std::move(op);
  m.sigma = sigma;
  return m;
}

FourierModel FourierModel::make(std::size_t height, std::size_t width, double sigma) {
  if (!is_power_of_two(height) || !is_power_of_two(width))
    throw InvalidArgument("Fourier model: extents must be powers of two");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("Fourier model: sigma must be >= 0");
  return FourierModel{height, width, sigma};
}

Shape image_shape(const ForwardModel& m) {
  return std::visit(
      [](const auto& mm) -> Shape {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, LinearGaussianModel>) return {mm.dim()};
        else return {mm.height, mm.width};
      },
      m);
}

Shape measurement_shape(const ForwardModel& m) {
  if (const auto* lg = std::get_if<LinearGaussianModel>(&m)) return {lg->measurements()};
  return image_shape(m);
}

std::size_t cond_channels(const ForwardModel& m) { return std::holds_alternative<FourierModel>(m) ? 2 : 1; }

std::size_t image_dim(const ForwardModel& m) { return shape_size(image_shape(m)); }

RealGrid prior_sample(const LinearGaussianModel& m, Rng& rng) {
  const auto xi = gauss_sample(rng, {m.dim()});
  const Vector x = m.prior_chol * Eigen::Map<const Vector>(xi.data.data(), static_cast<Eigen::Index>(m.dim()));
  return RealGrid({m.dim()}, std::vector<double>(x.data(), x.data() + x.size()));
}

namespace {

TrainPair observe_linear(const LinearGaussianModel& lg, const RealGrid& x, Rng& noise_rng) {
  const auto xi = gauss_sample(noise_rng, {lg.measurements()});
  const Vector clean = lg.op * Eigen::Map<const Vector>(x.data.data(), static_cast<Eigen::Index>(x.size()));
  ComplexGrid y({lg.measurements()});
  for (std::size_t k = 0; k < lg.measurements(); ++k) y.data[k] = {clean(k) + lg.sigma * xi.data[k], 0.0};
  return {x, std::move(y)};
}

}  // namespace

TrainPair observe(const ForwardModel& model, const RealGrid& x, Rng& noise_rng) {
  require_same_shape(x.shape, image_shape(model), "observe");
  require_finite(x.data, "observe ground truth");
  if (const auto* lg = std::get_if<LinearGaussianModel>(&model)) return observe_linear(*lg, x, noise_rng);
  const auto& fm = std::get<FourierModel>(model);
  ComplexGrid y = dft_forward(x);
  if (fm.sigma > 0.0) {
    const auto xi = gauss_sample(noise_rng, {2 * y.size()});
    const double scale = fm.sigma / std::sqrt(2.0);
    for (std::size_t k = 0; k < y.size(); ++k) y.data[k] += std::complex<double>(scale * xi.data[2 * k], scale * xi.data[2 * k + 1]);
  }
  return {x, std::move(y)};
}

TrainPair simulate_pair(const LinearGaussianModel& m, Rng& rng) {
  const auto x = prior_sample(m, rng);
  return observe_linear(m, x, rng);
}

RealGrid conditioning_field(const ForwardModel& model, const BitGrid& mask, const ComplexGrid& y,
                            OperatorCounter* counter) {
  require_same_shape(mask.shape, measurement_shape(model), "conditioning_field mask");
  require_same_shape(y.shape, measurement_shape(model), "conditioning_field observation");
  if (counter) ++counter->adjoint_calls;
  if (const auto* lg = std::get_if<LinearGaussianModel>(&model)) {
    Vector masked(static_cast<Eigen::Index>(lg->measurements()));
    for (std::size_t k = 0; k < lg->measurements(); ++k) masked(k) = mask.bits[k] ? y.data[k].real() : 0.0;
    const Vector c = lg->op.transpose() * masked;
    return RealGrid({1, lg->dim()}, std::vector<double>(c.data(), c.data() + c.size()));
  }
  const auto& fm = std::get<FourierModel>(model);
  const ComplexGrid a = dft_adjoint(mask_apply(mask, y));
  RealGrid c({2, fm.height, fm.width});
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    c.data[i] = a.data[i].real();
    c.data[n + i] = a.data[i].imag();
  }
  return c;
}

RealGrid conditioning_bits_grad(const ForwardModel& model, const ComplexGrid& y, std::span<const double> grad_cond) {
  require_same_shape(y.shape, measurement_shape(model), "conditioning_bits_grad");
  if (const auto* lg = std::get_if<LinearGaussianModel>(&model)) {
    if (grad_cond.size() != lg->dim()) throw InvalidArgument("conditioning_bits_grad: gradient size mismatch");
    const Vector pulled = lg->op * Eigen::Map<const Vector>(grad_cond.data(), static_cast<Eigen::Index>(grad_cond.size()));
    RealGrid g({lg->measurements()});
    for (std::size_t k = 0; k < lg->measurements(); ++k) g.data[k] = pulled(k) * y.data[k].real();
    return g;
  }
  const auto& fm = std::get<FourierModel>(model);
  const std::size_t n = fm.dim();
  if (grad_cond.size() != 2 * n) throw InvalidArgument("conditioning_bits_grad: gradient size mismatch");
  ComplexGrid g_img({fm.height, fm.width});
  for (std::size_t i = 0; i < n; ++i) g_img.data[i] = {grad_cond[i], grad_cond[n + i]};
  const ComplexGrid pushed = dft_forward(g_img);
  RealGrid g({fm.height, fm.width});
  for (std::size_t k = 0; k < n; ++k) g.data[k] = (std::conj(pushed.data[k]) * y.data[k]).real();
  return g;
}

DataSource DataSource::from_prior(const LinearGaussianModel& m) {
  DataSource d;
  d.prior_ = m;
  return d;
}

DataSource DataSource::from_images(std::vector<RealGrid> images) {
  if (images.empty()) throw InvalidArgument("DataSource: image set is empty");
  DataSource d;
  d.images_ = std::move(images);
  return d;
}

RealGrid DataSource::draw(Rng& rng) const {
  if (prior_) return prior_sample(*prior_, rng);
  return images_[rng.below(images_.size())];
}

std::vector<RealGrid> grf_dataset(const Shape& extents, double beta, std::size_t count, Rng& rng) {
  if (!(beta >= 0.0)) throw InvalidArgument("grf_dataset: beta must be >= 0");
  const std::size_t n = shape_size(extents);
  // Amplitude filter over wrapped frequency radius.
  std::vector<double> amplitude(n, 0.0);
  {
    std::vector<double> r2(n, 0.0);
    std::size_t stride = n;
    for (auto e : extents) {
      stride /= e;
      for (std::size_t i = 0; i < n; ++i) {
        const long f = signed_frequency((i / stride) % e, e);
        r2[i] += static_cast<double>(f * f);
      }
    }
    for (std::size_t i = 0; i < n; ++i) amplitude[i] = std::pow(1.0 + std::sqrt(r2[i]), -0.5 * beta);
  }
  std::vector<RealGrid> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    ComplexGrid spec = dft_forward(gauss_sample(rng, extents));
    for (std::size_t i = 0; i < n; ++i) spec.data[i] *= amplitude[i];
    const ComplexGrid field = dft_adjoint(spec);
    RealGrid img(extents);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += (img.data[i] = field.data[i].real());
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (auto& v : img.data) {
      v -= mean;
      var += v * v;
    }
    var /= static_cast<double>(n);
    const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    for (auto& v : img.data) v *= inv_sd;
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<RealGrid> phantom_dataset(const Shape& extents, std::size_t count, Rng& rng) {
  if (extents.size() != 2) throw InvalidArgument("phantom_dataset: extents must be {height, width}");
  if (count < 1) throw InvalidArgument("phantom_dataset: count must be >= 1");
  const std::size_t h = extents[0], w = extents[1];
  std::vector<RealGrid> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    RealGrid img(extents);
    const std::size_t ellipses = 3 + static_cast<std::size_t>(rng.below(6));
    for (std::size_t e = 0; e < ellipses; ++e) {
      const double cx = rng.uniform() - 0.5;  // normalized coordinates in [-1, 1]
      const double cy = rng.uniform() - 0.5;
      const double ax = 0.08 + 0.22 * rng.uniform();
      const double ay = ax * (1.5 + rng.uniform());  // vertical elongation, 2:1 on average
      const double intensity = 0.2 + 0.6 * rng.uniform();
      for (std::size_t r = 0; r < h; ++r) {
        const double y = (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(h) - 1.0;
        const double dy = (y - cy) / ay;
        for (std::size_t col = 0; col < w; ++col) {
          const double x = (2.0 * static_cast<double>(col) + 1.0) / static_cast<double>(w) - 1.0;
          const double dx = (x - cx) / ax;
          if (dx * dx + dy * dy <= 1.0) img.data[r * w + col] += intensity;
        }
      }
    }
    for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace oedflow
