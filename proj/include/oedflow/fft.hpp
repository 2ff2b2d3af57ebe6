#pragma once

#include <complex>
#include <span>

#include "oedflow/grid.hpp"

namespace oedflow {

/// Unitary multidimensional DFT (scale 1/sqrt(n) per axis), so dft_adjoint is
/// its inverse. Power-of-two axes use radix-2; other axes up to 64 fall back
/// to direct summation.
ComplexGrid dft_forward(const ComplexGrid& x);
ComplexGrid dft_forward(const RealGrid& x);
ComplexGrid dft_adjoint(const ComplexGrid& y);

/// Unnormalized in-place radix-2 transform; sign -1 forward, +1 inverse.
void fft_radix2(std::span<std::complex<double>> a, int sign);
/// Unnormalized O(n^2) direct transform, kept as the reference for fft_radix2.
void dft_direct(std::span<const std::complex<double>> in, std::span<std::complex<double>> out, int sign);

bool is_power_of_two(std::size_t n) noexcept;

/// Signed frequency index of DFT bin k on an axis of length n (k >= n/2 wraps negative).
inline long signed_frequency(std::size_t k, std::size_t n) {
  return k < (n + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

}  // namespace oedflow
