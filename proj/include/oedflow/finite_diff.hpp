#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "oedflow/error.hpp"
#include "oedflow/grid.hpp"

namespace oedflow {

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h.
template <class F>
std::vector<double> finite_diff_grad(F&& f, std::vector<double> x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(std::as_const(x));
    x[i] = saved - h;
    const double down = f(std::as_const(x));
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericalError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

template <class F>
RealGrid finite_diff_grad(F&& f, const RealGrid& x, double h) {
  RealGrid probe = x;
  auto wrapped = [&](const std::vector<double>& v) {
    probe.data = v;
    return f(std::as_const(probe));
  };
  return RealGrid(x.shape, finite_diff_grad(wrapped, x.data, h));
}

}  // namespace oedflow
