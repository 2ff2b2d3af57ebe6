#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oedflow/flow.hpp"
#include "oedflow/linalg.hpp"
#include "oedflow/models.hpp"
#include "oedflow/trainer.hpp"

namespace oedflow {

/// Invalid experiment configuration; the message starts with the full key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSection {
  std::string source = "phantom";  // phantom | grf | file
  std::size_t count = 512;
  double beta = 2.0;
  std::string path;
};

struct ModelSection {
  std::string kind = "linear_gaussian";  // linear_gaussian | fourier
  // linear_gaussian
  std::size_t dim = 8;
  std::vector<double> prior_eigenvalues;
  std::optional<Matrix> prior_covariance;
  std::optional<std::uint64_t> rotation_seed;
  std::string operator_kind = "identity";  // identity | real_fourier | matrix
  std::optional<Matrix> operator_matrix;
  // fourier
  Shape extents{16, 16};
  DatasetSection dataset;
  double sigma = 0.5;
};

struct DesignSection {
  double budget = 0.1;
  double center_fraction = 0.04;
  double init_raw = 0.0;
};

struct EvalSection {
  std::size_t ensemble_size = 64;
  std::size_t test_count = 100;
  bool redraw_per_sample = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelSection model;
  FlowConfig flow;  // input_dim and cond_channels derived from the model
  TrainConfig train;
  DesignSection design;
  EvalSection eval;
  nlohmann::json effective;  // the config after defaults, re-parseable
};

/// Parses and validates; relative file paths resolve against base_dir.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

ForwardModel build_model(const ExperimentConfig& cfg);
/// Training ground truths: the prior for linear-Gaussian models, otherwise
/// the configured image set (seeded from the "dataset" stream).
DataSource build_training_data(const ExperimentConfig& cfg, const ForwardModel& model);
/// Held-out ground truths from the "testset" stream, eval.test_count of them.
std::vector<RealGrid> build_test_set(const ExperimentConfig& cfg, const ForwardModel& model);
/// Hand-crafted low-pass plus random mask from the "baseline" stream.
BitGrid build_baseline_mask(const ExperimentConfig& cfg, const ForwardModel& model);

}  // namespace oedflow
