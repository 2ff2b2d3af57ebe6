#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "oedflow/flow.hpp"
#include "oedflow/models.hpp"
#include "oedflow/trainer.hpp"

namespace oedflow {

/// Posterior draws for one observation with pointwise mean and
/// population standard deviation.
struct PosteriorEnsemble {
  std::vector<RealGrid> samples;
  RealGrid mean;
  RealGrid stdev;
};

PosteriorEnsemble summarize_ensemble(std::vector<RealGrid> samples);

/// count draws x_j = f^{-1}(z_j; c), z_j ~ N(0, I); latents are drawn serially
/// from rng, inversions run in parallel. Samples take the given shape
/// (defaults to a flat vector).
PosteriorEnsemble posterior_sample(const FlowParams& params, const RealGrid& cond, Rng& rng, std::size_t count,
                                   const Shape& sample_shape = {});
PosteriorEnsemble posterior_sample_serial(const FlowParams& params, const RealGrid& cond, Rng& rng, std::size_t count,
                                          const Shape& sample_shape = {});

/// Builds the conditioning once from the observation, then samples.
PosteriorEnsemble posterior_from_observation(const FlowParams& params, const ForwardModel& model, const BitGrid& mask,
                                             const ComplexGrid& y, Rng& rng, std::size_t count,
                                             OperatorCounter* counter = nullptr);

/// ||estimate - reference||^2 / ||reference||^2.
double nmse(const RealGrid& estimate, const RealGrid& reference);
/// ||stdev||^2 / ||reference||^2.
double uncertainty_score(const PosteriorEnsemble& e, const RealGrid& reference);

struct ComparisonRow {
  std::size_t sample_id = 0;
  double nmse_learned = 0.0;
  double nmse_baseline = 0.0;
  double unc_learned = 0.0;
  double unc_baseline = 0.0;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  double mean_nmse_learned = 0.0;
  double mean_nmse_baseline = 0.0;
  double mean_unc_learned = 0.0;
  double mean_unc_baseline = 0.0;
  double win_rate_nmse = 0.0;  // learned strictly better counts 1, ties 0.5
  double win_rate_unc = 0.0;
  std::string learned_hash;
  std::string baseline_hash;
  std::size_t ensemble_size = 0;
  std::vector<std::string> warnings;
};

struct CompareOptions {
  std::size_t ensemble_size = 64;
  std::uint64_t seed = 0;
  bool redraw_per_sample = false;  // learned mask drawn per test sample instead of once
};

/// Evaluates both designs on every test image with common random numbers:
/// the same observation noise and the same latent draws for both sides.
ComparisonReport compare_designs(const Checkpoint& learned, const Checkpoint& baseline, const ForwardModel& model,
                                 const std::vector<RealGrid>& test_set, const CompareOptions& options);

void write_report_csv(const std::string& path, const ComparisonReport& report);
nlohmann::json report_summary_json(const ComparisonReport& report);

/// Stable hex digest of a checkpoint's configuration metadata.
std::string checkpoint_config_hash(const Checkpoint& c);

}  // namespace oedflow
