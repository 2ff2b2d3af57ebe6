#include "oedflow/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "oedflow/design.hpp"
#include "oedflow/error.hpp"
#include "oedflow/fft.hpp"
#include "oedflow/image_io.hpp"

namespace oedflow {

namespace {

using nlohmann::json;

// JSON literals like 4 parse as signed integers, so accept those too.
bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Reads keys of one JSON object, remembering which were consumed so that
// leftovers can be reported with their full path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* raw(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  double number(const std::string& key, double fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(key_path(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) fail(key_path(key), "expected a finite number");
    return d;
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!is_count(*v)) fail(key_path(key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(key_path(key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(key_path(key), "expected a string");
    return v->get<std::string>();
  }

  Section child(const std::string& key) {
    static const json kEmpty = json::object();
    const json* v = raw(key);
    return Section(v ? *v : kEmpty, key_path(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) fail(key_path(key), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

Matrix matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) Section::fail(path, "expected a non-empty array of rows");
  const std::size_t rows = j.size(), cols = j.front().size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) Section::fail(path, "rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) Section::fail(path, "expected numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> vector_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) Section::fail(path, "expected an array of numbers");
  std::vector<double> v;
  for (const auto& e : j) {
    if (!e.is_number()) Section::fail(path, "expected an array of numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

Matrix prior_covariance(const ModelSection& m) {
  if (m.prior_covariance) return *m.prior_covariance;
  Matrix d = Matrix::Zero(static_cast<Eigen::Index>(m.dim), static_cast<Eigen::Index>(m.dim));
  for (std::size_t i = 0; i < m.dim; ++i) d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = m.prior_eigenvalues[i];
  if (!m.rotation_seed) return d;
  Rng rng(*m.rotation_seed);
  const Matrix q = random_orthogonal(m.dim, rng);
  const Matrix s = q * d * q.transpose();
  return 0.5 * (s + s.transpose());
}

json effective_json(const ExperimentConfig& c) {
  json model;
  model["kind"] = c.model.kind;
  model["sigma"] = c.model.sigma;
  if (c.model.kind == "linear_gaussian") {
    model["dim"] = c.model.dim;
    if (c.model.prior_covariance) model["prior_covariance"] = matrix_to_json(*c.model.prior_covariance);
    else model["prior_eigenvalues"] = c.model.prior_eigenvalues;
    if (c.model.rotation_seed) model["rotation_seed"] = *c.model.rotation_seed;
    model["operator"] = c.model.operator_matrix ? matrix_to_json(*c.model.operator_matrix) : json(c.model.operator_kind);
  } else {
    model["extents"] = c.model.extents;
    json ds = {{"source", c.model.dataset.source}, {"count", c.model.dataset.count}};
    if (c.model.dataset.source == "grf") ds["beta"] = c.model.dataset.beta;
    if (c.model.dataset.source == "file") ds["path"] = c.model.dataset.path;
    model["dataset"] = ds;
  }
  const auto& t = c.train;
  return json{{"seed", c.seed},
              {"model", model},
              {"flow",
               {{"num_blocks", c.flow.num_blocks},
                {"hidden_width", c.flow.hidden_width},
                {"log_scale_clamp", c.flow.log_scale_clamp}}},
              {"train",
               {{"steps", t.steps},
                {"batch_size", t.batch_size},
                {"lr_theta", t.lr_theta},
                {"lr_w", t.lr_w},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"eps", t.eps},
                {"clip_norm", t.clip_norm},
                {"checkpoint_interval", t.checkpoint_interval},
                {"backward", t.backward == BackwardMode::Stored ? "stored" : "invertible"}}},
              {"design",
               {{"budget", c.design.budget},
                {"center_fraction", c.design.center_fraction},
                {"init_raw", c.design.init_raw}}},
              {"eval",
               {{"ensemble_size", c.eval.ensemble_size},
                {"test_count", c.eval.test_count},
                {"redraw_per_sample", c.eval.redraw_per_sample}}}};
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  Section root(j, "");
  c.seed = root.count("seed", 0);

  {
    Section m = root.child("model");
    c.model.kind = m.text("kind", "linear_gaussian");
    c.model.sigma = m.number("sigma", c.model.kind == "fourier" ? 0.0 : 0.5);
    if (c.model.kind == "linear_gaussian") {
      if (!(c.model.sigma > 0.0)) Section::fail(m.key_path("sigma"), "must be positive");
      c.model.dim = m.count("dim", 8);
      if (c.model.dim < 2 || c.model.dim > 64) Section::fail(m.key_path("dim"), "must lie in [2, 64]");
      if (const json* cov = m.raw("prior_covariance")) {
        c.model.prior_covariance = matrix_from_json(*cov, m.key_path("prior_covariance"));
        if (c.model.prior_covariance->rows() != static_cast<Eigen::Index>(c.model.dim) ||
            c.model.prior_covariance->cols() != static_cast<Eigen::Index>(c.model.dim))
          Section::fail(m.key_path("prior_covariance"), "must be dim x dim");
        if (m.has("prior_eigenvalues")) Section::fail(m.key_path("prior_eigenvalues"), "conflicts with prior_covariance");
      } else if (const json* ev = m.raw("prior_eigenvalues")) {
        c.model.prior_eigenvalues = vector_from_json(*ev, m.key_path("prior_eigenvalues"));
        if (c.model.prior_eigenvalues.size() != c.model.dim) Section::fail(m.key_path("prior_eigenvalues"), "must have dim entries");
        for (double v : c.model.prior_eigenvalues)
          if (!(v > 0.0)) Section::fail(m.key_path("prior_eigenvalues"), "must be positive");
      } else {
        c.model.prior_eigenvalues.assign(c.model.dim, 1.0);
      }
      if (const json* rs = m.raw("rotation_seed")) {
        if (!is_count(*rs)) Section::fail(m.key_path("rotation_seed"), "expected a non-negative integer");
        c.model.rotation_seed = rs->get<std::uint64_t>();
      }
      if (const json* op = m.raw("operator")) {
        if (op->is_string()) {
          c.model.operator_kind = op->get<std::string>();
          if (c.model.operator_kind != "identity" && c.model.operator_kind != "real_fourier")
            Section::fail(m.key_path("operator"), "expected identity, real_fourier, or a matrix");
        } else {
          c.model.operator_kind = "matrix";
          c.model.operator_matrix = matrix_from_json(*op, m.key_path("operator"));
          if (c.model.operator_matrix->cols() != static_cast<Eigen::Index>(c.model.dim))
            Section::fail(m.key_path("operator"), "must have dim columns");
        }
      }
    } else if (c.model.kind == "fourier") {
      if (!(c.model.sigma >= 0.0)) Section::fail(m.key_path("sigma"), "must be >= 0");
      if (const json* ex = m.raw("extents")) {
        if (!ex->is_array() || ex->size() != 2) Section::fail(m.key_path("extents"), "expected [height, width]");
        c.model.extents = {};
        for (const auto& e : *ex) {
          if (!is_count(e) || !is_power_of_two(e.get<std::size_t>()))
            Section::fail(m.key_path("extents"), "extents must be powers of two");
          c.model.extents.push_back(e.get<std::size_t>());
        }
      }
      Section ds = m.child("dataset");
      c.model.dataset.source = ds.text("source", "phantom");
      c.model.dataset.count = ds.count("count", 512);
      if (c.model.dataset.count < 1) Section::fail(ds.key_path("count"), "must be >= 1");
      if (c.model.dataset.source == "grf") {
        c.model.dataset.beta = ds.number("beta", 2.0);
        if (c.model.dataset.beta < 0.0) Section::fail(ds.key_path("beta"), "must be >= 0");
      } else if (c.model.dataset.source == "file") {
        std::filesystem::path p = ds.text("path", "");
        if (p.empty()) Section::fail(ds.key_path("path"), "required for file datasets");
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        if (!std::filesystem::exists(p)) Section::fail(ds.key_path("path"), "file not found: " + p.string());
        c.model.dataset.path = p.string();
      } else if (c.model.dataset.source != "phantom") {
        Section::fail(ds.key_path("source"), "expected phantom, grf, or file");
      }
      ds.finish();
    } else {
      Section::fail(m.key_path("kind"), "expected linear_gaussian or fourier");
    }
    m.finish();
  }

  {
    Section f = root.child("flow");
    const bool fourier = c.model.kind == "fourier";
    c.flow.input_dim = fourier ? shape_size(c.model.extents) : c.model.dim;
    c.flow.cond_channels = fourier ? 2 : 1;
    c.flow.num_blocks = f.count("num_blocks", 4);
    c.flow.hidden_width = f.count("hidden_width", 32);
    c.flow.log_scale_clamp = f.number("log_scale_clamp", 2.0);
    f.finish();
    try {
      c.flow.validate();
    } catch (const InvalidArgument& e) {
      Section::fail("flow", e.what());
    }
  }

  {
    Section d = root.child("design");
    c.design.budget = d.number("budget", 0.1);
    c.design.center_fraction = d.number("center_fraction", 0.04);
    c.design.init_raw = d.number("init_raw", 0.0);
    if (!(c.design.budget > 0.0 && c.design.budget < 1.0)) Section::fail(d.key_path("budget"), "must lie in (0, 1)");
    if (c.design.center_fraction < 0.0 || c.design.center_fraction > c.design.budget)
      Section::fail(d.key_path("center_fraction"), "must lie in [0, budget]");
    d.finish();
  }

  {
    Section t = root.child("train");
    auto& tc = c.train;
    tc.steps = t.count("steps", 1000);
    tc.batch_size = t.count("batch_size", 16);
    tc.lr_theta = t.number("lr_theta", 1e-3);
    tc.lr_w = t.number("lr_w", 1e-2);
    tc.beta1 = t.number("beta1", 0.9);
    tc.beta2 = t.number("beta2", 0.999);
    tc.eps = t.number("eps", 1e-8);
    tc.clip_norm = t.number("clip_norm", 10.0);
    tc.checkpoint_interval = t.count("checkpoint_interval", 0);
    const auto backward = t.text("backward", "invertible");
    if (backward != "invertible" && backward != "stored") Section::fail(t.key_path("backward"), "expected invertible or stored");
    tc.backward = backward == "stored" ? BackwardMode::Stored : BackwardMode::Invertible;
    tc.seed = c.seed;
    tc.budget = c.design.budget;
    t.finish();
    try {
      tc.validate();
    } catch (const InvalidArgument& e) {
      Section::fail("train", e.what());
    }
  }

  {
    Section e = root.child("eval");
    c.eval.ensemble_size = e.count("ensemble_size", 64);
    c.eval.test_count = e.count("test_count", 100);
    c.eval.redraw_per_sample = e.boolean("redraw_per_sample", false);
    if (c.eval.ensemble_size < 2) Section::fail(e.key_path("ensemble_size"), "must be >= 2");
    if (c.eval.test_count < 1) Section::fail(e.key_path("test_count"), "must be >= 1");
    e.finish();
  }
  root.finish();

  // Catch non-SPD priors and bad operators here rather than mid-run.
  if (c.model.kind == "linear_gaussian") {
    try {
      (void)build_model(c);
    } catch (const std::exception& e) {
      Section::fail("model", e.what());
    }
  }
  c.effective = effective_json(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

ForwardModel build_model(const ExperimentConfig& cfg) {
  const auto& m = cfg.model;
  if (m.kind == "fourier") return FourierModel::make(m.extents[0], m.extents[1], m.sigma);
  Matrix op;
  if (m.operator_matrix) op = *m.operator_matrix;
  else if (m.operator_kind == "real_fourier") op = real_fourier_basis(m.dim);
  else op = Matrix::Identity(static_cast<Eigen::Index>(m.dim), static_cast<Eigen::Index>(m.dim));
  return LinearGaussianModel::make(prior_covariance(m), std::move(op), m.sigma);
}

DataSource build_training_data(const ExperimentConfig& cfg, const ForwardModel& model) {
  if (const auto* lg = std::get_if<LinearGaussianModel>(&model)) return DataSource::from_prior(*lg);
  const auto& ds = cfg.model.dataset;
  Rng rng = Rng(cfg.seed).split("dataset");
  if (ds.source == "phantom") return DataSource::from_images(phantom_dataset(cfg.model.extents, ds.count, rng));
  if (ds.source == "grf") return DataSource::from_images(grf_dataset(cfg.model.extents, ds.beta, ds.count, rng));
  return DataSource::from_images(load_images(ds.path, cfg.model.extents));
}

std::vector<RealGrid> build_test_set(const ExperimentConfig& cfg, const ForwardModel& model) {
  Rng rng = Rng(cfg.seed).split("testset");
  const std::size_t n = cfg.eval.test_count;
  if (const auto* lg = std::get_if<LinearGaussianModel>(&model)) {
    std::vector<RealGrid> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prior_sample(*lg, rng));
    return out;
  }
  const auto& ds = cfg.model.dataset;
  if (ds.source == "phantom") return phantom_dataset(cfg.model.extents, n, rng);
  if (ds.source == "grf") return grf_dataset(cfg.model.extents, ds.beta, n, rng);
  // File datasets: the last test_count images are held out by convention.
  auto all = load_images(ds.path, cfg.model.extents);
  if (all.size() < n) throw ConfigError("eval.test_count: file dataset has only " + std::to_string(all.size()) + " images");
  return {all.end() - static_cast<std::ptrdiff_t>(n), all.end()};
}

BitGrid build_baseline_mask(const ExperimentConfig& cfg, const ForwardModel& model) {
  Rng rng = Rng(cfg.seed).split("baseline");
  return baseline_mask(measurement_shape(model), cfg.design.budget, cfg.design.center_fraction, rng).bits;
}

}  // namespace oedflow
