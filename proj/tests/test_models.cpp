#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oedflow/design.hpp"
#include "oedflow/error.hpp"
#include "oedflow/fft.hpp"
#include "oedflow/image_io.hpp"
#include "oedflow/models.hpp"

using namespace oedflow;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("oedflow_models_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

LinearGaussianModel small_lg(double sigma) {
  Matrix cov(3, 3);
  cov << 2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 0.5;
  return LinearGaussianModel::make(cov, Matrix::Identity(3, 3), sigma);
}

}  // namespace

TEST_CASE("noise-free observations") {
  Rng rng(1);
  const auto lg = small_lg(0.0);
  const auto pair = simulate_pair(lg, rng);
  for (std::size_t i = 0; i < 3; ++i) CHECK(pair.y[i] == std::complex<double>(pair.x[i], 0.0));

  const ForwardModel fm = FourierModel::make(8, 4, 0.0);
  RealGrid x({8, 4});
  for (auto& v : x.data) v = rng.normal();
  const auto obs = observe(fm, x, rng);
  const auto back = dft_adjoint(obs.y);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-10);
}

TEST_CASE("prior samples have the prior covariance") {
  Rng rng(2);
  const auto lg = small_lg(0.3);
  Matrix acc = Matrix::Zero(3, 3);
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    const auto x = prior_sample(lg, rng);
    const Eigen::Map<const Vector> v(x.data.data(), 3);
    acc += v * v.transpose();
  }
  acc /= n;
  CHECK((acc - lg.prior_cov).norm() / lg.prior_cov.norm() < 0.05);
}

TEST_CASE("fourier noise calibration") {
  Rng rng(3);
  const double sigma = 0.2;
  const ForwardModel fm = FourierModel::make(8, 8, sigma);
  const RealGrid x({8, 8}, 0.5);
  const auto clean = dft_forward(x);
  double sum = 0.0, sq = 0.0;
  const int n = 4000;
  for (int t = 0; t < n; ++t) {
    const auto y = observe(fm, x, rng).y;
    double e = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) e += std::norm(y[i] - clean[i]);
    sum += e;
    sq += e * e;
  }
  const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - sigma * sigma * 64) < 3 * se);
}

TEST_CASE("conditioning field") {
  Rng rng(4);
  const ForwardModel fm = FourierModel::make(4, 8, 0.0);
  RealGrid x({4, 8});
  for (auto& v : x.data) v = rng.normal();
  const auto y = observe(fm, x, rng).y;

  const auto full = conditioning_field(fm, BitGrid({4, 8}, 1), y);
  CHECK(full.shape == Shape{2, 4, 8});
  for (std::size_t i = 0; i < 32; ++i) {
    CHECK(std::abs(full[i] - x[i]) < 1e-10);
    CHECK(std::abs(full[32 + i]) < 1e-10);
  }
  for (double v : conditioning_field(fm, BitGrid({4, 8}, 0), y).data) CHECK(v == 0.0);

  const auto mask = sample_mask_from_probs(RealGrid({4, 8}, 0.4), rng).bits;
  const auto c = conditioning_field(fm, mask, y);
  const auto ref = dft_adjoint(mask_apply(mask, y));
  for (std::size_t i = 0; i < 32; ++i) {
    CHECK(std::abs(c[i] - ref[i].real()) < 1e-12);
    CHECK(std::abs(c[32 + i] - ref[i].imag()) < 1e-12);
  }

  // Linear in y.
  ComplexGrid y2(y.shape);
  for (auto& v : y2.data) v = {rng.normal(), rng.normal()};
  ComplexGrid sum(y.shape);
  for (std::size_t i = 0; i < y.size(); ++i) sum[i] = 2.0 * y[i] - 3.0 * y2[i];
  const auto c2 = conditioning_field(fm, mask, y2), cs = conditioning_field(fm, mask, sum);
  for (std::size_t i = 0; i < cs.size(); ++i) CHECK(std::abs(cs[i] - (2.0 * c[i] - 3.0 * c2[i])) < 1e-10);

  OperatorCounter counter;
  conditioning_field(fm, mask, y, &counter);
  CHECK(counter.adjoint_calls == 1);

  const auto lg = small_lg(0.1);
  const ForwardModel lfm = lg;
  const auto pair = simulate_pair(lg, rng);
  CHECK(conditioning_field(lfm, BitGrid({3}, 1), pair.y).shape == Shape{1, 3});
}

TEST_CASE("conditioning gradient with respect to mask bits") {
  // c is linear in each bit, so the pullback equals a one-sided difference.
  Rng rng(5);
  const ForwardModel fm = FourierModel::make(4, 4, 0.1);
  RealGrid x({4, 4});
  for (auto& v : x.data) v = rng.normal();
  const auto y = observe(fm, x, rng).y;
  std::vector<double> g(32);
  for (auto& v : g) v = rng.normal();
  const auto grad = conditioning_bits_grad(fm, y, g);
  BitGrid none({4, 4}, 0);
  for (std::size_t k = 0; k < 16; ++k) {
    BitGrid one = none;
    one.bits[k] = 1;
    const auto c = conditioning_field(fm, one, y);
    double dl = 0.0;
    for (std::size_t i = 0; i < 32; ++i) dl += g[i] * c[i];
    CHECK(std::abs(grad[k] - dl) < 1e-12);
  }
}

TEST_CASE("gaussian random fields") {
  Rng rng(6);
  const auto white = grf_dataset({16, 16}, 0.0, 400, rng);
  double pixel_var = 0.0;
  for (std::size_t p = 0; p < 256; ++p) {
    double m = 0.0, q = 0.0;
    for (const auto& im : white) m += im[p];
    m /= 400;
    for (const auto& im : white) q += (im[p] - m) * (im[p] - m);
    pixel_var += q / 400;
  }
  CHECK(std::abs(pixel_var / 256 - 1.0) < 0.05);

  // Radially averaged power spectrum follows |k|^-beta at large |k|.
  const double beta = 4.0;
  const auto fields = grf_dataset({32, 32}, beta, 100, rng);
  std::vector<double> power(17, 0.0), counts(17, 0.0);
  for (const auto& f : fields) {
    const auto F = dft_forward(f);
    for (std::size_t r = 0; r < 32; ++r)
      for (std::size_t c = 0; c < 32; ++c) {
        const double k = std::hypot(signed_frequency(r, 32), signed_frequency(c, 32));
        const auto bin = static_cast<std::size_t>(std::lround(k));
        if (bin >= 4 && bin <= 16) {
          power[bin] += std::norm(F[r * 32 + c]);
          counts[bin] += 1.0;
        }
      }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t b = 4; b <= 16; ++b) {
    const double lx = std::log(1.0 + b), ly = std::log(power[b] / counts[b]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    n += 1;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(std::abs(slope + beta) < 0.3);

  Rng a(7), b(7);
  CHECK(grf_dataset({8, 8}, 2.0, 3, a) == grf_dataset({8, 8}, 2.0, 3, b));
}

TEST_CASE("ellipse phantoms") {
  Rng rng(8);
  const auto ph = phantom_dataset({32, 32}, 1000, rng);
  RealGrid mean({32, 32});
  for (const auto& im : ph) {
    for (std::size_t i = 0; i < im.size(); ++i) {
      CHECK(im[i] >= 0.0);
      CHECK(im[i] <= 1.0);
      mean[i] += im[i] / 1000.0;
    }
  }
  const double center = mean[16 * 32 + 16];
  const double corners = (mean[0] + mean[31] + mean[31 * 32] + mean[32 * 32 - 1]) / 4;
  CHECK(center > corners);
  Rng a(9), b(9);
  CHECK(phantom_dataset({16, 16}, 4, a) == phantom_dataset({16, 16}, 4, b));
}

TEST_CASE("data source") {
  Rng rng(10);
  const auto imgs = phantom_dataset({8, 8}, 3, rng);
  const auto src = DataSource::from_images(imgs);
  CHECK_FALSE(src.is_prior());
  for (int t = 0; t < 20; ++t) {
    const auto x = src.draw(rng);
    CHECK(std::find(imgs.begin(), imgs.end(), x) != imgs.end());
  }
  CHECK(DataSource::from_prior(small_lg(0.1)).is_prior());
  CHECK_THROWS_AS(DataSource::from_images({}), InvalidArgument);
}

TEST_CASE("pgm and tensor files") {
  const auto dir = temp_dir("io");
  Rng rng(11);
  RealGrid img({5, 7});
  for (auto& v : img.data) v = rng.uniform();
  write_pgm_image(dir / "a.pgm", img, 16);
  const auto back = read_pgm(dir / "a.pgm");
  CHECK(back.shape == img.shape);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back[i] - img[i]) <= 0.5 / 65535 + 1e-15);
  // A second round trip is exact once quantized.
  write_pgm_image(dir / "b.pgm", back, 16);
  CHECK(read_pgm(dir / "b.pgm") == back);

  write_pgm_image(dir / "black.pgm", RealGrid({4, 4}), 8);
  const auto black = load_images(dir / "black.pgm", {4, 4});
  REQUIRE(black.size() == 1);
  for (double v : black[0].data) CHECK(v == 0.0);

  // Truncated and bad files.
  {
    std::ifstream in(dir / "a.pgm", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(dir / "cut.pgm", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  }
  try {
    read_pgm(dir / "cut.pgm");
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatError::Kind::Truncated);
    CHECK(std::string(e.what()).find("truncated payload") != std::string::npos);
  }
  std::ofstream(dir / "junk.oedt", std::ios::binary) << "NOPE0000";
  CHECK_THROWS_AS(read_tensor(dir / "junk.oedt"), FormatError);
  CHECK_THROWS_AS(load_images(dir / "a.pgm", {4, 4}), FormatError);

  RealGrid stack({3, 4, 4});
  for (auto& v : stack.data) v = rng.normal();
  write_tensor(dir / "s.oedt", stack);
  const auto t = read_tensor(dir / "s.oedt");
  CHECK(t.shape == stack.shape);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == static_cast<double>(static_cast<float>(stack[i])));
  const auto loaded = load_images(dir / "s.oedt", {4, 4});
  CHECK(loaded.size() == 3);
  fs::remove_all(dir);
}
