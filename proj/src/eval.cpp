#include "oedflow/eval.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>

#include "oedflow/checkpoint.hpp"
#include "oedflow/kernels.hpp"

namespace oedflow {

namespace {

std::vector<RealGrid> draw_latents(Rng& rng, std::size_t n, std::size_t count) {
  std::vector<RealGrid> zs;
  zs.reserve(count);
  for (std::size_t j = 0; j < count; ++j) zs.push_back(gauss_sample(rng, {n}));
  return zs;
}

void reshape_all(std::vector<RealGrid>& samples, const Shape& shape) {
  if (shape.empty()) return;
  for (auto& s : samples) {
    if (shape_size(shape) != s.size()) throw InvalidArgument("posterior_sample: sample shape mismatch");
    s.shape = shape;
  }
}

double wins(double learned, double baseline) {
  if (learned < baseline) return 1.0;
  if (learned == baseline) return 0.5;
  return 0.0;
}

}  // namespace

PosteriorEnsemble summarize_ensemble(std::vector<RealGrid> samples) {
  if (samples.size() < 2) throw InvalidArgument("posterior ensemble needs at least two samples");
  const Shape shape = samples.front().shape;
  const std::size_t n = samples.front().size();
  PosteriorEnsemble e{std::move(samples), RealGrid(shape), RealGrid(shape)};
  const double count = static_cast<double>(e.samples.size());
  for (const auto& s : e.samples) {
    require_same_shape(s.shape, shape, "posterior ensemble");
    for (std::size_t i = 0; i < n; ++i) e.mean.data[i] += s.data[i];
  }
  for (auto& v : e.mean.data) v /= count;
  for (const auto& s : e.samples) {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = s.data[i] - e.mean.data[i];
      e.stdev.data[i] += d * d;
    }
  }
  for (auto& v : e.stdev.data) v = std::sqrt(v / count);
  return e;
}

PosteriorEnsemble posterior_sample(const FlowParams& params, const RealGrid& cond, Rng& rng, std::size_t count,
                                   const Shape& sample_shape) {
  if (count < 2) throw InvalidArgument("posterior_sample: count must be >= 2");
  const auto zs = draw_latents(rng, params.config().input_dim, count);
  auto samples = inverse_batch_omp(params, zs, cond.data);
  reshape_all(samples, sample_shape);
  return summarize_ensemble(std::move(samples));
}

PosteriorEnsemble posterior_sample_serial(const FlowParams& params, const RealGrid& cond, Rng& rng, std::size_t count,
                                          const Shape& sample_shape) {
  if (count < 2) throw InvalidArgument("posterior_sample: count must be >= 2");
  const auto zs = draw_latents(rng, params.config().input_dim, count);
  auto samples = inverse_batch_serial(params, zs, cond.data);
  reshape_all(samples, sample_shape);
  return summarize_ensemble(std::move(samples));
}

PosteriorEnsemble posterior_from_observation(const FlowParams& params, const ForwardModel& model, const BitGrid& mask,
                                             const ComplexGrid& y, Rng& rng, std::size_t count,
                                             OperatorCounter* counter) {
  const RealGrid c = conditioning_field(model, mask, y, counter);
  return posterior_sample(params, c, rng, count, image_shape(model));
}

double nmse(const RealGrid& estimate, const RealGrid& reference) {
  require_same_shape(estimate.shape, reference.shape, "nmse");
  const double denom = squared_norm(reference.data);
  if (!(denom > 0.0)) throw InvalidArgument("nmse: reference has zero norm");
  double num = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate.data[i] - reference.data[i];
    num += d * d;
  }
  return num / denom;
}

double uncertainty_score(const PosteriorEnsemble& e, const RealGrid& reference) {
  require_same_shape(e.stdev.shape, reference.shape, "uncertainty_score");
  const double denom = squared_norm(reference.data);
  if (!(denom > 0.0)) throw InvalidArgument("uncertainty_score: reference has zero norm");
  return squared_norm(e.stdev.data) / denom;
}

std::string checkpoint_config_hash(const Checkpoint& c) {
  const nlohmann::json meta = {{"flow", flow_config_to_json(c.params.config())},
                               {"train", train_config_to_json(c.train)},
                               {"budget", c.design.budget},
                               {"step", c.step},
                               {"experiment", c.experiment},
                               {"fixed_mask", c.fixed_mask ? nlohmann::json(c.fixed_mask->bits) : nlohmann::json()}};
  const std::uint64_t h = hash_name(meta.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ComparisonReport compare_designs(const Checkpoint& learned, const Checkpoint& baseline, const ForwardModel& model,
                                 const std::vector<RealGrid>& test_set, const CompareOptions& options) {
  if (test_set.empty()) throw InvalidArgument("compare_designs: empty test set");
  const FlowConfig& lc = learned.params.config();
  const FlowConfig& bc = baseline.params.config();
  if (lc.input_dim != image_dim(model) || bc.input_dim != image_dim(model) || lc.cond_channels != cond_channels(model) ||
      bc.cond_channels != cond_channels(model))
    throw InvalidArgument("compare_designs: checkpoint dimensions do not match the forward model");

  ComparisonReport report;
  report.ensemble_size = options.ensemble_size;
  report.learned_hash = checkpoint_config_hash(learned);
  report.baseline_hash = checkpoint_config_hash(baseline);
  if (std::abs(learned.design.budget - baseline.design.budget) > 1e-12)
    report.warnings.push_back("budgets differ: learned " + std::to_string(learned.design.budget) + " vs baseline " +
                              std::to_string(baseline.design.budget));

  const Rng root(options.seed);
  Rng mask_rng = root.split("eval-mask");
  const BitGrid learned_mask = design_mask(learned, mask_rng);
  mask_rng = root.split("eval-mask");
  const BitGrid baseline_mask_bits = design_mask(baseline, mask_rng);

  report.rows.resize(test_set.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(test_set.size()); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      const Rng item = root.split(static_cast<std::uint64_t>(i));
      Rng noise = item.split("noise");
      const auto pair = observe(model, test_set[i], noise);
      BitGrid lmask = learned_mask;
      if (options.redraw_per_sample) {
        Rng r = item.split("mask");
        lmask = design_mask(learned, r);
      }
      Rng z_learned = item.split("latent");
      Rng z_baseline = item.split("latent");
      const auto e_l = posterior_sample_serial(learned.params, conditioning_field(model, lmask, pair.y), z_learned,
                                               options.ensemble_size, pair.x.shape);
      const auto e_b = posterior_sample_serial(baseline.params, conditioning_field(model, baseline_mask_bits, pair.y),
                                               z_baseline, options.ensemble_size, pair.x.shape);
      report.rows[i] = ComparisonRow{i, nmse(e_l.mean, pair.x), nmse(e_b.mean, pair.x),
                                     uncertainty_score(e_l, pair.x), uncertainty_score(e_b, pair.x)};
    } catch (...) {
#pragma omp critical(oedflow_compare_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& r : report.rows) {
    report.mean_nmse_learned += r.nmse_learned;
    report.mean_nmse_baseline += r.nmse_baseline;
    report.mean_unc_learned += r.unc_learned;
    report.mean_unc_baseline += r.unc_baseline;
    report.win_rate_nmse += wins(r.nmse_learned, r.nmse_baseline);
    report.win_rate_unc += wins(r.unc_learned, r.unc_baseline);
  }
  const double n = static_cast<double>(report.rows.size());
  for (double* v : {&report.mean_nmse_learned, &report.mean_nmse_baseline, &report.mean_unc_learned,
                    &report.mean_unc_baseline, &report.win_rate_nmse, &report.win_rate_unc})
    *v /= n;
  return report;
}

void write_report_csv(const std::string& path, const ComparisonReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path);
  out << "sample_id,nmse_learned,nmse_baseline,unc_learned,unc_baseline\n";
  out.precision(17);
  for (const auto& r : report.rows)
    out << r.sample_id << ',' << r.nmse_learned << ',' << r.nmse_baseline << ',' << r.unc_learned << ','
        << r.unc_baseline << '\n';
}

nlohmann::json report_summary_json(const ComparisonReport& report) {
  return {{"count", report.rows.size()},
          {"ensemble_size", report.ensemble_size},
          {"mean_nmse_learned", report.mean_nmse_learned},
          {"mean_nmse_baseline", report.mean_nmse_baseline},
          {"mean_unc_learned", report.mean_unc_learned},
          {"mean_unc_baseline", report.mean_unc_baseline},
          {"win_rate_nmse", report.win_rate_nmse},
          {"win_rate_unc", report.win_rate_unc},
          {"learned_config_hash", report.learned_hash},
          {"baseline_config_hash", report.baseline_hash},
          {"warnings", report.warnings}};
}

}  // namespace oedflow
