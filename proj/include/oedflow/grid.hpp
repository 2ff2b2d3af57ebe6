#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace oedflow {

using Shape = std::vector<std::size_t>;

/// Number of elements described by an extent list. Throws on empty or zero extents.
std::size_t shape_size(const Shape& shape);

/// Dense real array, row-major.
struct RealGrid {
  Shape shape;
  std::vector<double> data;

  RealGrid() = default;
  explicit RealGrid(Shape extents, double fill = 0.0);
  RealGrid(Shape extents, std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::span<const double> view() const noexcept { return data; }
  std::span<double> view() noexcept { return data; }

  bool operator==(const RealGrid&) const = default;
};

/// Dense complex array, row-major; std::complex<double> is stored as an
/// interleaved (re, im) pair.
struct ComplexGrid {
  Shape shape;
  std::vector<std::complex<double>> data;

  ComplexGrid() = default;
  explicit ComplexGrid(Shape extents);
  ComplexGrid(Shape extents, std::vector<std::complex<double>> values);
  static ComplexGrid from_real(const RealGrid& x);

  std::size_t size() const noexcept { return data.size(); }
  std::complex<double>& operator[](std::size_t i) { return data[i]; }
  const std::complex<double>& operator[](std::size_t i) const { return data[i]; }

  bool operator==(const ComplexGrid&) const = default;
};

/// Binary grid over a measurement index set.
struct BitGrid {
  Shape shape;
  std::vector<std::uint8_t> bits;

  BitGrid() = default;
  explicit BitGrid(Shape extents, std::uint8_t fill = 0);

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t count() const noexcept;

  bool operator==(const BitGrid&) const = default;
};

void require_finite(std::span<const double> values, std::string_view what);
void require_finite(const ComplexGrid& g, std::string_view what);
void require_same_shape(const Shape& a, const Shape& b, std::string_view what);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double squared_norm(const ComplexGrid& g);

}  // namespace oedflow
