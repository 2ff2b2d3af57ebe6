#include "oedflow/commands.hpp"

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oedflow/checkpoint.hpp"
#include "oedflow/config.hpp"
#include "oedflow/design.hpp"
#include "oedflow/error.hpp"
#include "oedflow/eval.hpp"
#include "oedflow/image_io.hpp"
#include "oedflow/kernels.hpp"
#include "oedflow/oracle.hpp"

namespace oedflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed of the evaluation stream; eval and mask export share it so that the
// exported binary mask is the one the comparison used.
std::uint64_t evaluation_seed(std::uint64_t seed) { return Rng(seed).split("eval").seed(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw FormatError(FormatError::Kind::Io, "cannot create directory " + dir.string());
}

RealGrid as_image(const RealGrid& g) {
  if (g.shape.size() == 2) return g;
  return RealGrid({1, g.size()}, g.data);
}

void write_probs_csv(const fs::path& path, const RealGrid& probs) {
  std::string s = "index,probability\n";
  char buf[64];
  for (std::size_t i = 0; i < probs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, probs[i]);
    s += buf;
  }
  write_text(path, s);
}

void export_design(const DesignWeights& design, std::uint64_t seed, const fs::path& dir) {
  ensure_dir(dir);
  const RealGrid probs = weights_to_probs(design);
  Rng rng = Rng(evaluation_seed(seed)).split("eval-mask");
  const BitGrid bits = sample_mask(design, rng).bits;
  RealGrid bit_image(bits.shape);
  for (std::size_t i = 0; i < bits.size(); ++i) bit_image[i] = bits.bits[i];
  write_pgm_image(dir / "mask_bits.pgm", as_image(bit_image), 8);
  write_pgm_image(dir / "mask_probs.pgm", as_image(probs), 16);
  write_probs_csv(dir / "mask_probs.csv", probs);
}

Checkpoint load_existing_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw InvalidArgument("checkpoint not found: " + path);
  return load_checkpoint(path);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, mode = "joint", out;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = load_experiment_config(a.config);
  TrainConfig tc = cfg.train;
  tc.mode = train_mode_from_string(a.mode);
  const ForwardModel model = build_model(cfg);
  const DataSource data = build_training_data(cfg, model);
  std::optional<BitGrid> fixed;
  if (tc.mode == TrainMode::FixedMask) fixed = build_baseline_mask(cfg, model);

  Checkpoint state = initial_checkpoint(cfg.flow, tc, measurement_shape(model), fixed, cfg.design.init_raw);
  state.experiment = cfg.effective;
  state.experiment["mode"] = to_string(tc.mode);

  ensure_dir(a.out);
  const fs::path dir(a.out);
  std::vector<MetricsRow> rows;
  TrainHooks hooks;
  hooks.on_step = [&](const MetricsRow& r) { rows.push_back(r); };
  hooks.on_checkpoint = [&](const Checkpoint& c) { save_checkpoint(c, dir / "checkpoint.oedf"); };

  Checkpoint final_state;
  try {
    final_state = train(model, data, std::move(state), tc.steps, hooks).checkpoint;
  } catch (const TrainingAborted& e) {
    save_checkpoint(e.last_good(), dir / "checkpoint.oedf");
    write_metrics_csv((dir / "metrics.csv").string(), rows);
    err << "training aborted at step " << e.last_good().step << ": " << e.what()
        << "\nlast good state saved to " << (dir / "checkpoint.oedf").string() << '\n';
    return kExitNumerical;
  }
  save_checkpoint(final_state, dir / "checkpoint.oedf");
  write_metrics_csv((dir / "metrics.csv").string(), rows);
  if (tc.mode == TrainMode::Joint) {
    const RealGrid probs = weights_to_probs(final_state.design);
    write_probs_csv(dir / "mask_probs.csv", probs);
    write_pgm_image(dir / "mask_probs.pgm", as_image(probs), 16);
  }
  out << json{{"steps", final_state.step}, {"out", dir.string()}}.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- oracle

struct OracleArgs {
  std::string config, mode = "analytic";
  std::size_t budget = 0;
  std::vector<std::size_t> mask;
  std::size_t samples = 100000;
};

json mask_json(const BitGrid& m) {
  json idx = json::array();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.bits[i]) idx.push_back(i);
  return idx;
}

int cmd_oracle(const OracleArgs& a, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = load_experiment_config(a.config);
  const ForwardModel model = build_model(cfg);
  const std::size_t m = shape_size(measurement_shape(model));
  if (a.mode != "analytic" && a.mode != "mc" && a.mode != "brute") throw InvalidArgument("--mode: expected analytic, mc, or brute");
  if (a.budget > m) throw InvalidArgument("--budget: exceeds the " + std::to_string(m) + " measurement locations");

  const auto* lg = std::get_if<LinearGaussianModel>(&model);
  if (!lg) {
    if (a.mode == "brute") {
      const std::uint64_t count = binomial_count(m, a.budget);
      err << "brute force over C(" << m << ", " << a.budget << ") = "
          << (count == UINT64_MAX ? std::string("more than 2^64") : std::to_string(count))
          << " masks exceeds the limit of " << kBruteForceLimit << '\n';
    } else {
      err << "oracle: the " << a.mode << " mode needs a linear_gaussian model\n";
    }
    return kExitUsage;
  }

  json result{{"mode", a.mode}, {"budget", a.budget}};
  if (a.mode == "brute") {
    const std::uint64_t count = binomial_count(m, a.budget);
    if (count > kBruteForceLimit) {
      err << "brute force over C(" << m << ", " << a.budget << ") = " << count << " masks exceeds the limit of "
          << kBruteForceLimit << '\n';
      return kExitUsage;
    }
    const BruteForceResult r = brute_force_best_mask(*lg, a.budget);
    result["eig"] = r.eig;
    result["mask"] = mask_json(r.mask);
    result["evaluated"] = r.evaluated;
  } else {
    // Without --mask the first `budget` locations are measured.
    BitGrid mask(measurement_shape(model));
    if (a.mask.empty()) {
      for (std::size_t i = 0; i < a.budget; ++i) mask.bits[i] = 1;
    } else {
      for (auto i : a.mask) {
        if (i >= m) throw InvalidArgument("--mask: index " + std::to_string(i) + " out of range");
        mask.bits[i] = 1;
      }
    }
    result["mask"] = mask_json(mask);
    if (a.mode == "analytic") {
      result["eig"] = eig_analytic(*lg, mask);
    } else {
      Rng rng = Rng(cfg.seed).split("oracle");
      const McEstimate e = eig_via_expected_loglik(*lg, mask, a.samples, rng);
      result["eig"] = e.value;
      result["stderr"] = e.stderr_;
      result["samples"] = e.samples;
    }
  }
  out << result.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string learned, baseline, config, out;
};

void check_compatible(const Checkpoint& c, const ExperimentConfig& cfg, const ForwardModel& model,
                      const std::string& name) {
  const FlowConfig& f = c.params.config();
  if (f.input_dim != cfg.flow.input_dim || f.cond_channels != cfg.flow.cond_channels)
    throw InvalidArgument(name + ": flow dimensions (" + std::to_string(f.input_dim) + ", " +
                          std::to_string(f.cond_channels) + ") do not match the config (" +
                          std::to_string(cfg.flow.input_dim) + ", " + std::to_string(cfg.flow.cond_channels) + ")");
  if (c.design.raw.shape != measurement_shape(model) || (c.fixed_mask && c.fixed_mask->shape != measurement_shape(model)))
    throw InvalidArgument(name + ": design extents do not match the config");
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  const Checkpoint learned = load_existing_checkpoint(a.learned);
  const Checkpoint baseline = load_existing_checkpoint(a.baseline);
  const ExperimentConfig cfg = load_experiment_config(a.config);
  const ForwardModel model = build_model(cfg);
  check_compatible(learned, cfg, model, a.learned);
  check_compatible(baseline, cfg, model, a.baseline);

  const auto test_set = build_test_set(cfg, model);
  CompareOptions opt;
  opt.ensemble_size = cfg.eval.ensemble_size;
  opt.seed = evaluation_seed(cfg.seed);
  opt.redraw_per_sample = cfg.eval.redraw_per_sample;
  const ComparisonReport report = compare_designs(learned, baseline, model, test_set, opt);

  ensure_dir(a.out);
  const fs::path dir(a.out);
  write_report_csv((dir / "comparison.csv").string(), report);
  const json summary = report_summary_json(report);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_text(dir / "config.json", cfg.effective.dump(2) + "\n");
  out << summary.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- data

struct DataArgs {
  std::string config, out, input;
};

RealGrid stack(const std::vector<RealGrid>& images) {
  Shape shape{images.size()};
  shape.insert(shape.end(), images.front().shape.begin(), images.front().shape.end());
  RealGrid s(shape);
  std::size_t k = 0;
  for (const auto& im : images)
    for (double v : im.data) s[k++] = v;
  return s;
}

int cmd_data_gen(const DataArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment_config(a.config);
  const ForwardModel model = build_model(cfg);
  std::vector<RealGrid> images;
  if (const auto* lg = std::get_if<LinearGaussianModel>(&model)) {
    Rng rng = Rng(cfg.seed).split("dataset");
    for (std::size_t i = 0; i < cfg.model.dataset.count; ++i) images.push_back(prior_sample(*lg, rng));
  } else {
    images = build_training_data(cfg, model).images();
  }
  const RealGrid t = stack(images);
  if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path());
  write_tensor(a.out, t);
  out << json{{"out", a.out}, {"shape", t.shape}}.dump() << '\n';
  return kExitOk;
}

int cmd_data_inspect(const DataArgs& a, std::ostream& out) {
  if (!fs::exists(a.input)) throw InvalidArgument("file not found: " + a.input);
  const RealGrid t = read_tensor(a.input);
  const std::size_t count = t.shape.size() >= 2 ? t.shape[0] : 1;
  const std::size_t per = t.size() / count;
  Shape extents = t.shape;
  if (t.shape.size() >= 2) extents.erase(extents.begin());

  double mean = 0.0, lo = t.size() ? t[0] : 0.0, hi = lo;
  for (double v : t.data) {
    mean += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (double v : t.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(t.size());

  // Across-image variance at each location, averaged over locations.
  double pixel_var = 0.0;
  for (std::size_t p = 0; p < per; ++p) {
    double m = 0.0, q = 0.0;
    for (std::size_t i = 0; i < count; ++i) m += t[i * per + p];
    m /= static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) q += (t[i * per + p] - m) * (t[i * per + p] - m);
    pixel_var += q / static_cast<double>(count);
  }
  pixel_var /= static_cast<double>(per);

  out << json{{"shape", t.shape},
              {"count", count},
              {"extents", extents},
              {"mean", mean},
              {"variance", var},
              {"pixel_variance", pixel_var},
              {"min", lo},
              {"max", hi}}
             .dump()
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- mask

struct MaskArgs {
  std::string ckpt, out;
  double budget = -1.0;
};

int cmd_mask(const MaskArgs& a, bool rescale, std::ostream& out, std::ostream& err) {
  const Checkpoint c = load_existing_checkpoint(a.ckpt);
  if (c.fixed_mask || c.train.mode == TrainMode::FixedMask) {
    err << a.ckpt << ": no learned design (fixed-mask checkpoint)\n";
    return kExitUsage;
  }
  DesignWeights d = c.design;
  if (rescale) {
    if (a.budget < 0.0) throw InvalidArgument("--budget is required for rescale");
    d = rescale_budget(d, a.budget);
  }
  export_design(d, c.train.seed, a.out);
  out << json{{"out", a.out}, {"budget", d.budget}}.dump() << '\n';
  return kExitOk;
}

int cmd_config(const std::string& ckpt, std::ostream& out) {
  const Checkpoint c = load_existing_checkpoint(ckpt);
  out << c.experiment.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint experimental design and posterior sampling with conditional normalizing flows", "oedflow"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a flow, jointly with the design or on a fixed baseline mask");
  train_cmd->add_option("--config", ta.config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--mode", ta.mode, "joint | fixed")->check(CLI::IsMember({"joint", "fixed"}));
  train_cmd->add_option("--out", ta.out, "Output directory")->required();

  OracleArgs oa;
  auto* oracle_cmd = app.add_subcommand("oracle", "Closed-form, Monte Carlo, or exhaustive EIG for a linear-Gaussian model");
  oracle_cmd->add_option("--config", oa.config, "Experiment config (JSON)")->required();
  oracle_cmd->add_option("--budget", oa.budget, "Number of measurements k")->required();
  oracle_cmd->add_option("--mode", oa.mode, "analytic | mc | brute");
  oracle_cmd->add_option("--mask", oa.mask, "Measured indices (analytic, mc)");
  oracle_cmd->add_option("--samples", oa.samples, "Monte Carlo sample count");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Compare a learned design against a baseline on the test set");
  eval_cmd->add_option("--learned", ea.learned, "Learned-design checkpoint")->required();
  eval_cmd->add_option("--baseline", ea.baseline, "Baseline checkpoint")->required();
  eval_cmd->add_option("--config", ea.config, "Experiment config (JSON)")->required();
  eval_cmd->add_option("--out", ea.out, "Output directory")->required();

  DataArgs da;
  auto* data_cmd = app.add_subcommand("data", "Generate or inspect datasets");
  data_cmd->require_subcommand(1);
  auto* gen_cmd = data_cmd->add_subcommand("gen", "Write the training set as an OEDT tensor");
  gen_cmd->add_option("--config", da.config, "Experiment config (JSON)")->required();
  gen_cmd->add_option("--out", da.out, "Output .oedt file")->required();
  auto* inspect_cmd = data_cmd->add_subcommand("inspect", "Print shape and statistics of an OEDT tensor");
  inspect_cmd->add_option("input", da.input, "OEDT file")->required();

  MaskArgs ma;
  auto* mask_cmd = app.add_subcommand("mask", "Export a learned design");
  mask_cmd->require_subcommand(1);
  auto* export_cmd = mask_cmd->add_subcommand("export", "Write binary and probability masks");
  export_cmd->add_option("--ckpt", ma.ckpt, "Checkpoint")->required();
  export_cmd->add_option("--out", ma.out, "Output directory")->required();
  auto* rescale_cmd = mask_cmd->add_subcommand("rescale", "Rescale the design to a new budget, then export");
  rescale_cmd->add_option("--ckpt", ma.ckpt, "Checkpoint")->required();
  rescale_cmd->add_option("--budget", ma.budget, "New budget s'")->required();
  rescale_cmd->add_option("--out", ma.out, "Output directory")->required();

  std::string config_ckpt;
  auto* config_cmd = app.add_subcommand("config", "Print the effective config stored in a checkpoint");
  config_cmd->add_option("--ckpt", config_ckpt, "Checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  apply_thread_limit();
  try {
    if (*train_cmd) return cmd_train(ta, out, err);
    if (*oracle_cmd) return cmd_oracle(oa, out, err);
    if (*eval_cmd) return cmd_eval(ea, out, err);
    if (*gen_cmd) return cmd_data_gen(da, out);
    if (*inspect_cmd) return cmd_data_inspect(da, out);
    if (*export_cmd) return cmd_mask(ma, false, out, err);
    if (*rescale_cmd) return cmd_mask(ma, true, out, err);
    if (*config_cmd) return cmd_config(config_ckpt, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace oedflow
