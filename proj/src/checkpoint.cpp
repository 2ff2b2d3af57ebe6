#include "oedflow/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace oedflow {

namespace {

constexpr char kMagic[4] = {'O', 'E', 'D', 'F'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return std::bit_cast<double>(v);
}

nlohmann::json rng_to_json(const Rng& r) { return {{"seed", r.seed()}, {"counter", r.counter()}}; }
Rng rng_from_json(const nlohmann::json& j) {
  return Rng(j.at("seed").get<std::uint64_t>(), j.at("counter").get<std::uint64_t>());
}

[[noreturn]] void corrupt(const std::string& name, const std::string& what) {
  throw FormatError(FormatError::Kind::Corrupt, name + ": corrupt checkpoint (" + what + ")");
}

}  // namespace

nlohmann::json flow_config_to_json(const FlowConfig& cfg) {
  return {{"input_dim", cfg.input_dim},
          {"cond_channels", cfg.cond_channels},
          {"num_blocks", cfg.num_blocks},
          {"hidden_width", cfg.hidden_width},
          {"log_scale_clamp", cfg.log_scale_clamp}};
}

FlowConfig flow_config_from_json(const nlohmann::json& j) {
  FlowConfig cfg;
  cfg.input_dim = j.at("input_dim").get<std::size_t>();
  cfg.cond_channels = j.at("cond_channels").get<std::size_t>();
  cfg.num_blocks = j.at("num_blocks").get<std::size_t>();
  cfg.hidden_width = j.at("hidden_width").get<std::size_t>();
  cfg.log_scale_clamp = j.at("log_scale_clamp").get<double>();
  cfg.validate();
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"steps", cfg.steps},
          {"batch_size", cfg.batch_size},
          {"lr_theta", cfg.lr_theta},
          {"lr_w", cfg.lr_w},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"eps", cfg.eps},
          {"seed", cfg.seed},
          {"budget", cfg.budget},
          {"mode", to_string(cfg.mode)},
          {"clip_norm", cfg.clip_norm},
          {"checkpoint_interval", cfg.checkpoint_interval},
          {"backward", cfg.backward == BackwardMode::Stored ? "stored" : "invertible"}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.steps = j.at("steps").get<std::size_t>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.lr_theta = j.at("lr_theta").get<double>();
  cfg.lr_w = j.at("lr_w").get<double>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.eps = j.at("eps").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.budget = j.at("budget").get<double>();
  cfg.mode = train_mode_from_string(j.at("mode").get<std::string>());
  cfg.clip_norm = j.at("clip_norm").get<double>();
  cfg.checkpoint_interval = j.at("checkpoint_interval").get<std::size_t>();
  const auto backward = j.at("backward").get<std::string>();
  if (backward != "stored" && backward != "invertible") throw InvalidArgument("unknown backward mode " + backward);
  cfg.backward = backward == "stored" ? BackwardMode::Stored : BackwardMode::Invertible;
  cfg.validate();
  return cfg;
}

std::string encode_checkpoint(const Checkpoint& c) {
  std::vector<std::pair<std::string, const std::vector<double>*>> blocks = {
      {"flow_params", &c.params.values},  {"design_raw", &c.design.raw.data}, {"adam_theta_m", &c.theta_moments.m},
      {"adam_theta_v", &c.theta_moments.v}, {"adam_design_m", &c.design_moments.m},
      {"adam_design_v", &c.design_moments.v}};
  std::vector<double> mask_values;
  if (c.fixed_mask) {
    mask_values.assign(c.fixed_mask->bits.begin(), c.fixed_mask->bits.end());
    blocks.emplace_back("fixed_mask", &mask_values);
  }

  nlohmann::json meta;
  meta["format"] = "oedflow-checkpoint";
  meta["step"] = c.step;
  meta["flow"] = flow_config_to_json(c.params.config());
  meta["train"] = train_config_to_json(c.train);
  meta["design"] = {{"shape", c.design.raw.shape}, {"budget", c.design.budget}};
  meta["adam"] = {{"theta_step", c.theta_moments.step}, {"design_step", c.design_moments.step}};
  meta["rng"] = {{"algorithm", std::string(Rng::kAlgorithm)},
                 {"data", rng_to_json(c.rngs.data)},
                 {"mask", rng_to_json(c.rngs.mask)},
                 {"noise", rng_to_json(c.rngs.noise)}};
  auto table = nlohmann::json::array();
  for (const auto& [name, values] : blocks) table.push_back({{"name", name}, {"length", values->size()}});
  meta["blocks"] = table;
  meta["experiment"] = c.experiment;
  const std::string text = meta.dump();

  std::string out(kMagic, kMagic + 4);
  put_u32(out, Checkpoint::kVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& [name, values] : blocks)
    for (double v : *values) put_f64(out, v);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& name) {
  if (bytes.size() < 4 || bytes.compare(0, 4, kMagic, 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic, name + ": bad magic");
  if (bytes.size() < 12) throw FormatError(FormatError::Kind::Truncated, name + ": truncated header");
  const auto version = get_u32(bytes, 4);
  if (version != Checkpoint::kVersion)
    throw FormatError(FormatError::Kind::VersionMismatch,
                      name + ": version mismatch (file " + std::to_string(version) + ", supported " +
                          std::to_string(Checkpoint::kVersion) + ")");
  const std::size_t meta_len = get_u32(bytes, 8);
  if (bytes.size() < 12 + meta_len) throw FormatError(FormatError::Kind::Truncated, name + ": truncated metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.substr(12, meta_len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(name, std::string("metadata: ") + e.what());
  }

  Checkpoint c;
  std::size_t pos = 12 + meta_len;
  try {
    if (meta.at("format") != "oedflow-checkpoint") corrupt(name, "unknown format tag");
    c.step = meta.at("step").get<std::uint64_t>();
    c.train = train_config_from_json(meta.at("train"));
    c.params = FlowParams(flow_config_from_json(meta.at("flow")));
    c.design.raw = RealGrid(meta.at("design").at("shape").get<Shape>());
    c.design.budget = meta.at("design").at("budget").get<double>();
    c.theta_moments.step = meta.at("adam").at("theta_step").get<std::uint64_t>();
    c.design_moments.step = meta.at("adam").at("design_step").get<std::uint64_t>();
    const auto& rng = meta.at("rng");
    if (rng.at("algorithm") != std::string(Rng::kAlgorithm)) corrupt(name, "unknown RNG algorithm");
    c.rngs = TrainRngs{rng_from_json(rng.at("data")), rng_from_json(rng.at("mask")), rng_from_json(rng.at("noise"))};
    c.experiment = meta.at("experiment");

    for (const auto& entry : meta.at("blocks")) {
      const auto block = entry.at("name").get<std::string>();
      const auto length = entry.at("length").get<std::size_t>();
      if (bytes.size() < pos + 8 * length) throw FormatError(FormatError::Kind::Truncated, name + ": truncated payload");
      std::vector<double> values(length);
      for (std::size_t i = 0; i < length; ++i) values[i] = get_f64(bytes, pos + 8 * i);
      pos += 8 * length;
      auto expect = [&](std::size_t n) {
        if (length != n) corrupt(name, "block " + block + " has length " + std::to_string(length));
      };
      if (block == "flow_params") {
        expect(c.params.size());
        c.params.values = std::move(values);
      } else if (block == "design_raw") {
        expect(c.design.raw.size());
        c.design.raw.data = std::move(values);
      } else if (block == "adam_theta_m") {
        expect(c.params.size());
        c.theta_moments.m = std::move(values);
      } else if (block == "adam_theta_v") {
        expect(c.params.size());
        c.theta_moments.v = std::move(values);
      } else if (block == "adam_design_m") {
        expect(c.design.raw.size());
        c.design_moments.m = std::move(values);
      } else if (block == "adam_design_v") {
        expect(c.design.raw.size());
        c.design_moments.v = std::move(values);
      } else if (block == "fixed_mask") {
        expect(c.design.raw.size());
        BitGrid mask(c.design.raw.shape);
        for (std::size_t i = 0; i < length; ++i) {
          if (values[i] != 0.0 && values[i] != 1.0) corrupt(name, "fixed mask is not binary");
          mask.bits[i] = values[i] != 0.0;
        }
        c.fixed_mask = std::move(mask);
      } else {
        corrupt(name, "unknown block " + block);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(name, std::string("metadata: ") + e.what());
  } catch (const InvalidArgument& e) {
    corrupt(name, e.what());
  }
  if (pos != bytes.size()) corrupt(name, "trailing bytes");
  if (c.theta_moments.m.size() != c.params.size() || c.design_moments.m.size() != c.design.raw.size())
    corrupt(name, "missing blocks");
  if ((c.train.mode == TrainMode::FixedMask) != c.fixed_mask.has_value()) corrupt(name, "mode and fixed mask disagree");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes, path.string());
}

}  // namespace oedflow
