#include "oedflow/grid.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <string>

#include "oedflow/error.hpp"

namespace oedflow {

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) throw InvalidArgument("shape has no extents");
  std::size_t n = 1;
  for (auto e : shape) {
    if (e == 0) throw InvalidArgument("shape has a zero extent");
    n *= e;
  }
  return n;
}

RealGrid::RealGrid(Shape extents, double fill) : shape(std::move(extents)), data(shape_size(shape), fill) {}

RealGrid::RealGrid(Shape extents, std::vector<double> values) : shape(std::move(extents)), data(std::move(values)) {
  if (data.size() != shape_size(shape))
    throw InvalidArgument("RealGrid: " + std::to_string(data.size()) + " values for shape of size " +
                          std::to_string(shape_size(shape)));
}

ComplexGrid::ComplexGrid(Shape extents) : shape(std::move(extents)), data(shape_size(shape)) {}

ComplexGrid::ComplexGrid(Shape extents, std::vector<std::complex<double>> values)
    : shape(std::move(extents)), data(std::move(values)) {
  if (data.size() != shape_size(shape)) throw InvalidArgument("ComplexGrid: value count does not match shape");
}

ComplexGrid ComplexGrid::from_real(const RealGrid& x) {
  ComplexGrid out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = {x.data[i], 0.0};
  return out;
}

BitGrid::BitGrid(Shape extents, std::uint8_t fill) : shape(std::move(extents)), bits(shape_size(shape), fill) {}

std::size_t BitGrid::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw NumericalError(std::string(what) + ": non-finite value at index " + std::to_string(i));
  }
}

void require_finite(const ComplexGrid& g, std::string_view what) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g.data[i].real()) || !std::isfinite(g.data[i].imag()))
      throw NumericalError(std::string(what) + ": non-finite value at index " + std::to_string(i));
  }
}

void require_same_shape(const Shape& a, const Shape& b, std::string_view what) {
  if (a != b) throw InvalidArgument(std::string(what) + ": shape mismatch");
}

double dot(std::span<const double> a, std::span<const double> b) {
  // Four partial sums; the grouping is fixed so results are reproducible.
  const std::size_t n = a.size();
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double squared_norm(const ComplexGrid& g) {
  double s = 0.0;
  for (const auto& v : g.data) s += std::norm(v);
  return s;
}

}  // namespace oedflow
