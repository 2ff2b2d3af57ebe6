#include "oedflow/fft.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "oedflow/error.hpp"

namespace oedflow {

namespace {

constexpr std::size_t kDirectLimit = 64;

void transform_axis_1d(std::vector<std::complex<double>>& buf, std::vector<std::complex<double>>& scratch, int sign) {
  const std::size_t n = buf.size();
  if (is_power_of_two(n)) {
    fft_radix2(buf, sign);
  } else {
    scratch.resize(n);
    dft_direct(buf, scratch, sign);
    buf.swap(scratch);
  }
}

// Applies the unitary 1D transform along every axis in turn.
ComplexGrid transform(ComplexGrid g, int sign) {
  for (auto e : g.shape) {
    if (!is_power_of_two(e) && e > kDirectLimit)
      throw InvalidArgument("dft: extent " + std::to_string(e) + " is neither a power of two nor <= 64");
  }
  require_finite(g, "dft input");
  const std::size_t rank = g.shape.size();
  std::size_t inner = g.size();
  std::vector<std::complex<double>> buf, scratch;
  for (std::size_t axis = 0; axis < rank; ++axis) {
    const std::size_t len = g.shape[axis];
    inner /= len;
    const std::size_t outer = g.size() / (len * inner);
    const double scale = 1.0 / std::sqrt(static_cast<double>(len));
    buf.resize(len);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        for (std::size_t k = 0; k < len; ++k) buf[k] = g.data[base + k * inner];
        transform_axis_1d(buf, scratch, sign);
        for (std::size_t k = 0; k < len; ++k) g.data[base + k * inner] = buf[k] * scale;
      }
    }
  }
  return g;
}

}  // namespace

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::span<std::complex<double>> a, int sign) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw InvalidArgument("fft_radix2: length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles from the exact angle rather than a running product.
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

void dft_direct(std::span<const std::complex<double>> in, std::span<std::complex<double>> out, int sign) {
  const std::size_t n = in.size();
  if (out.size() != n) throw InvalidArgument("dft_direct: output length mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t phase = (j * k) % n;
      acc += in[j] * std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(phase) / static_cast<double>(n));
    }
    out[k] = acc;
  }
}

ComplexGrid dft_forward(const ComplexGrid& x) { return transform(x, -1); }

ComplexGrid dft_forward(const RealGrid& x) { return transform(ComplexGrid::from_real(x), -1); }

ComplexGrid dft_adjoint(const ComplexGrid& y) { return transform(y, +1); }

}  // namespace oedflow
