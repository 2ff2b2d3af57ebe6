#include "oedflow/adam.hpp"

#include <cmath>

#include "oedflow/error.hpp"

namespace oedflow {

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments, const AdamHyper& hyper) {
  if (params.size() != grads.size() || moments.m.size() != params.size() || moments.v.size() != params.size())
    throw InvalidArgument("adam_step: size mismatch");
  ++moments.step;
  const double t = static_cast<double>(moments.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    moments.m[i] = hyper.beta1 * moments.m[i] + (1.0 - hyper.beta1) * grads[i];
    moments.v[i] = hyper.beta2 * moments.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    params[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

}  // namespace oedflow
