#include "oedflow/trainer.hpp"

#include <cmath>
#include <fstream>

#include "oedflow/kernels.hpp"

namespace oedflow {

namespace {

double norm_of(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
  if (!(lr_theta > 0.0) || !(lr_w > 0.0)) throw InvalidArgument("train config: learning rates must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw InvalidArgument("train config: Adam betas must lie in (0, 1)");
  if (!(eps > 0.0)) throw InvalidArgument("train config: eps must be positive");
  if (!(budget > 0.0 && budget < 1.0)) throw InvalidArgument("train config: budget must lie in (0, 1)");
  if (!(clip_norm > 0.0)) throw InvalidArgument("train config: clip_norm must be positive");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::Joint ? "joint" : "fixed_mask"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "joint") return TrainMode::Joint;
  if (s == "fixed_mask" || s == "fixed") return TrainMode::FixedMask;
  throw InvalidArgument("unknown training mode '" + s + "'");
}

Checkpoint initial_checkpoint(const FlowConfig& flow, const TrainConfig& cfg, const Shape& measurement_shape,
                              std::optional<BitGrid> fixed_mask, double init_raw) {
  cfg.validate();
  if ((cfg.mode == TrainMode::FixedMask) != fixed_mask.has_value())
    throw InvalidArgument("initial_checkpoint: a fixed mask is required exactly in fixed_mask mode");
  if (fixed_mask && fixed_mask->shape != measurement_shape)
    throw InvalidArgument("initial_checkpoint: fixed mask shape does not match the measurements");
  const Rng root(cfg.seed);
  Rng init = root.split("init");
  Checkpoint c;
  c.train = cfg;
  c.params = flow_init(flow, init);
  c.design = DesignWeights{RealGrid(measurement_shape, init_raw), cfg.budget};
  c.design.validate();
  c.fixed_mask = std::move(fixed_mask);
  c.theta_moments = AdamMoments(c.params.size());
  c.design_moments = AdamMoments(c.design.raw.size());
  c.rngs = TrainRngs{root.split("data"), root.split("mask"), root.split("noise")};
  return c;
}

TrainResult train(const ForwardModel& model, const DataSource& data, Checkpoint state, std::uint64_t until_step,
                  const TrainHooks& hooks) {
  const TrainConfig& cfg = state.train;
  cfg.validate();
  const bool joint = cfg.mode == TrainMode::Joint;
  if (!joint && !state.fixed_mask) throw InvalidArgument("train: fixed_mask mode without a stored mask");
  if (state.params.config().input_dim != image_dim(model) || state.params.config().cond_channels != cond_channels(model))
    throw InvalidArgument("train: flow layout does not match the forward model");
  if (state.design.raw.shape != measurement_shape(model))
    throw InvalidArgument("train: design shape does not match the forward model");

  const AdamHyper theta_hyper{cfg.lr_theta, cfg.beta1, cfg.beta2, cfg.eps};
  const AdamHyper w_hyper{cfg.lr_w, cfg.beta1, cfg.beta2, cfg.eps};
  const std::size_t batch = cfg.batch_size;
  const double inv_batch = 1.0 / static_cast<double>(batch);

  TrainResult result;
  BatchGradient grads;
  std::vector<RealGrid> xs(batch), cs(batch);
  std::vector<ComplexGrid> ys(batch);
  std::vector<double> grad_theta(state.params.size());

  while (state.step < until_step) {
    const TrainRngs rngs_before = state.rngs;
    try {
      const RealGrid probs = joint ? weights_to_probs(state.design) : mask_from_bits(*state.fixed_mask).probs;
      const MaskSample mask = joint ? sample_mask_from_probs(probs, state.rngs.mask) : mask_from_bits(*state.fixed_mask);

      for (std::size_t b = 0; b < batch; ++b) {
        auto pair = observe(model, data.draw(state.rngs.data), state.rngs.noise);
        cs[b] = conditioning_field(model, mask.bits, pair.y);
        xs[b] = std::move(pair.x);
        ys[b] = std::move(pair.y);
      }
      batch_gradient_omp(state.params, xs, cs, cfg.backward, grads);

      for (std::size_t i = 0; i < grad_theta.size(); ++i) grad_theta[i] = grads.params[i] * inv_batch;
      RealGrid grad_w(state.design.raw.shape);
      if (joint) {
        RealGrid grad_bits(state.design.raw.shape);
        for (std::size_t b = 0; b < batch; ++b) {
          const RealGrid g = conditioning_bits_grad(model, ys[b], grads.cond[b]);
          for (std::size_t k = 0; k < g.size(); ++k) grad_bits.data[k] += g.data[k] * inv_batch;
        }
        grad_w = straight_through_grad(grad_bits, mask, state.design);
      }

      MetricsRow row;
      double sum = 0.0;
      for (double v : grads.nll) sum += v;
      row.nll_mean = sum * inv_batch;
      double ss = 0.0;
      for (double v : grads.nll) ss += (v - row.nll_mean) * (v - row.nll_mean);
      row.nll_std = std::sqrt(ss * inv_batch);
      double util = 0.0;
      for (double p : probs.data) util += p;
      row.budget_utilization = util / static_cast<double>(probs.size());
      row.grad_norm_theta = norm_of(grad_theta);
      row.grad_norm_w = norm_of(grad_w.data);

      if (!std::isfinite(row.nll_mean) || !all_finite(grad_theta) || !all_finite(grad_w.data))
        throw NumericalError("non-finite loss or gradient");

      const double total = std::hypot(row.grad_norm_theta, row.grad_norm_w);
      if (total > cfg.clip_norm) {
        const double scale = cfg.clip_norm / total;
        for (auto& g : grad_theta) g *= scale;
        for (auto& g : grad_w.data) g *= scale;
      }
      // Nothing but the random streams has changed before this point.
      adam_step(state.params.values, grad_theta, state.theta_moments, theta_hyper);
      if (joint) adam_step(state.design.raw.data, grad_w.data, state.design_moments, w_hyper);

      ++state.step;
      row.step = state.step;
      result.metrics.push_back(row);
      if (hooks.on_step) hooks.on_step(row);
    } catch (const NumericalError& e) {
      state.rngs = rngs_before;
      throw TrainingAborted("training aborted at step " + std::to_string(state.step + 1) + ": " + e.what(),
                            std::move(state));
    }
    if (hooks.on_checkpoint && cfg.checkpoint_interval > 0 && state.step % cfg.checkpoint_interval == 0)
      hooks.on_checkpoint(state);
  }
  result.checkpoint = std::move(state);
  return result;
}

TrainResult train_joint(const ForwardModel& model, const DataSource& data, const FlowConfig& flow,
                        const TrainConfig& cfg, std::optional<BitGrid> fixed_mask) {
  auto start = initial_checkpoint(flow, cfg, measurement_shape(model), std::move(fixed_mask));
  return train(model, data, std::move(start), cfg.steps);
}

BitGrid design_mask(const Checkpoint& ckpt, Rng& rng) {
  if (ckpt.fixed_mask) return *ckpt.fixed_mask;
  return sample_mask(ckpt.design, rng).bits;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path);
  out << "step,nll_mean,nll_std,budget_utilization,grad_norm_theta,grad_norm_w\n";
  out.precision(17);
  for (const auto& r : rows)
    out << r.step << ',' << r.nll_mean << ',' << r.nll_std << ',' << r.budget_utilization << ','
        << r.grad_norm_theta << ',' << r.grad_norm_w << '\n';
}

}  // namespace oedflow
