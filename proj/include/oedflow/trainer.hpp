#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oedflow/adam.hpp"
#include "oedflow/design.hpp"
#include "oedflow/error.hpp"
#include "oedflow/flow.hpp"
#include "oedflow/models.hpp"
#include "oedflow/rng.hpp"

namespace oedflow {

enum class TrainMode { Joint, FixedMask };

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  double lr_theta = 1e-3;
  double lr_w = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double budget = 0.025;
  TrainMode mode = TrainMode::Joint;
  double clip_norm = 10.0;
  std::size_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
  BackwardMode backward = BackwardMode::Invertible;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TrainRngs {
  Rng data, mask, noise;
  bool operator==(const TrainRngs&) const = default;
};

/// Everything needed to resume training bit-exactly.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig train;
  FlowParams params;
  DesignWeights design;
  std::optional<BitGrid> fixed_mask;  // present in fixed-mask mode
  AdamMoments theta_moments;
  AdamMoments design_moments;
  std::uint64_t step = 0;
  TrainRngs rngs;
  nlohmann::json experiment;  // effective experiment config, echoed for reproducibility

  bool operator==(const Checkpoint&) const = default;
};

struct MetricsRow {
  std::uint64_t step = 0;
  double nll_mean = 0.0;
  double nll_std = 0.0;
  double budget_utilization = 0.0;  // mean(p) of the design used this step
  double grad_norm_theta = 0.0;
  double grad_norm_w = 0.0;
};

/// Fresh state: flow from the "init" stream, raw design weights all init_raw.
/// fixed_mask is required iff cfg.mode == FixedMask.
Checkpoint initial_checkpoint(const FlowConfig& flow, const TrainConfig& cfg, const Shape& measurement_shape,
                              std::optional<BitGrid> fixed_mask = std::nullopt, double init_raw = 0.0);

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;  // every checkpoint_interval steps
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
};

/// Thrown when the loss or a gradient turns non-finite; carries the state
/// before the failing step.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, Checkpoint last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const noexcept { return last_good_; }

 private:
  Checkpoint last_good_;
};

/// Advances `state` until state.step == until_step. Each step draws a
/// minibatch, samples one mask shared by the batch, backpropagates the mean
/// nll into theta and (joint mode) through the conditioning operator and the
/// pass-through estimator into the design, clips the joint gradient norm and
/// applies Adam.
TrainResult train(const ForwardModel& model, const DataSource& data, Checkpoint state, std::uint64_t until_step,
                  const TrainHooks& hooks = {});

/// train() from initial_checkpoint for cfg.steps steps.
TrainResult train_joint(const ForwardModel& model, const DataSource& data, const FlowConfig& flow,
                        const TrainConfig& cfg, std::optional<BitGrid> fixed_mask = std::nullopt);

/// The mask a checkpoint's design prescribes at evaluation time: the stored
/// mask in fixed-mask mode, otherwise one draw from the learned probabilities.
BitGrid design_mask(const Checkpoint& ckpt, Rng& rng);

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace oedflow
