#include "srop/run_config.hpp"

#include <fstream>
#include <set>

#include "srop/errors.hpp"

namespace srop {

using ordered_json = nlohmann::ordered_json;

namespace {

void reject_unknown(const ordered_json& j, const std::set<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_range(const ordered_json& j, const char* key, std::optional<Range>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2 || !(v[1] >= v[0])) {
    throw ConfigError(std::string(key) + " must be [lo, hi] with lo <= hi");
  }
  out = Range{v[0], v[1]};
}

}  // namespace

ordered_json dataset_config_to_json(const DatasetConfig& c) {
  ordered_json j;
  j["problem"] = to_string(c.problem);
  j["n_samples"] = c.n_samples;
  j["seed"] = c.seed;
  j["lr_mode"] = to_string(c.lr_mode);
  j["hr_nx"] = c.hr_nx;
  j["hr_nt"] = c.hr_nt;
  j["space_factor"] = c.space_factor;
  j["time_factor"] = c.time_factor;
  j["lr_keep_frames"] = c.lr_keep_frames;
  j["sensors"] = c.sensors;
  j["sensor_frames"] = c.sensor_frames;
  j["queries"] = c.queries;
  j["query_frames"] = c.query_frames;
  auto range = [](const std::optional<Range>& r) {
    return r ? ordered_json::array({r->first, r->second}) : ordered_json(nullptr);
  };
  j["alpha_range"] = range(c.alpha_range);
  j["beta_range"] = range(c.beta_range);
  j["diffusion_range"] = range(c.diffusion_range);
  return j;
}

DatasetConfig dataset_config_from_json(const ordered_json& j) {
  reject_unknown(j,
                 {"problem", "n_samples", "seed", "lr_mode", "hr_nx", "hr_nt", "space_factor",
                  "time_factor", "lr_keep_frames", "sensors", "sensor_frames", "queries",
                  "query_frames", "alpha_range", "beta_range", "diffusion_range"},
                 "data section");
  DatasetConfig c;
  try {
    if (j.contains("problem")) c.problem = problem_from_string(j.at("problem").get<std::string>());
    if (j.contains("lr_mode")) c.lr_mode = lr_mode_from_string(j.at("lr_mode").get<std::string>());
    read_opt(j, "n_samples", c.n_samples);
    read_opt(j, "seed", c.seed);
    read_opt(j, "hr_nx", c.hr_nx);
    read_opt(j, "hr_nt", c.hr_nt);
    read_opt(j, "space_factor", c.space_factor);
    read_opt(j, "time_factor", c.time_factor);
    read_opt(j, "lr_keep_frames", c.lr_keep_frames);
    read_opt(j, "sensors", c.sensors);
    read_opt(j, "sensor_frames", c.sensor_frames);
    read_opt(j, "queries", c.queries);
    read_opt(j, "query_frames", c.query_frames);
    read_range(j, "alpha_range", c.alpha_range);
    read_range(j, "beta_range", c.beta_range);
    read_range(j, "diffusion_range", c.diffusion_range);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad data section: ") + e.what());
  }
  return c;
}

ModelConfig default_model_config(Layout layout, std::size_t d) {
  ModelConfig c;
  c.K = 64;
  c.variant = Variant::three_net;
  c.sensor.kind = SubnetKind::mlp;
  c.sensor.widths = {128, 128, 128};
  c.trunk.kind = SubnetKind::mlp;
  c.trunk.widths = {128, 128, 128};
  c.trunk.activation = Activation::relu;
  if (layout == Layout::spacetime) {
    c.normalization = Normalization::global;
    c.branch.kind = SubnetKind::mlp;
    c.branch.widths = {128, 128, 128};
  } else {
    c.normalization = Normalization::instance;
    c.branch.time_upscale = true;
    c.branch.widths = {128};
    c.branch.lstm_hidden = 64;
    if (d == 2) {
      c.branch.kind = SubnetKind::cnn_lstm_mlp;
      c.branch.conv = {{8, 4, 2, 1}, {16, 4, 2, 1}};
    } else {
      c.branch.kind = SubnetKind::lstm_mlp;
    }
  }
  return c;
}

namespace {

SubnetSpec overlay_subnet(const ordered_json& j, const SubnetSpec& base) {
  ordered_json merged = subnet_to_json(base);
  for (const auto& [key, value] : j.items()) {
    if (key == "in_features" || key == "out_features" || key == "frame_shape" ||
        key == "frame_channels" || !merged.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in subnetwork section");
    }
    merged[key] = value;
  }
  return subnet_from_json(merged);
}

}  // namespace

ModelConfig model_config_from_json(const ordered_json& j, const ModelConfig& defaults) {
  reject_unknown(j, {"variant", "K", "normalization", "branch", "sensor", "trunk"},
                 "model section");
  ModelConfig c = defaults;
  try {
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    read_opt(j, "K", c.K);
    if (j.contains("normalization")) {
      c.normalization = normalization_from_string(j.at("normalization").get<std::string>());
    }
    if (j.contains("branch")) c.branch = overlay_subnet(j.at("branch"), c.branch);
    if (j.contains("sensor")) c.sensor = overlay_subnet(j.at("sensor"), c.sensor);
    if (j.contains("trunk")) c.trunk = overlay_subnet(j.at("trunk"), c.trunk);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model section: ") + e.what());
  }
  if (c.K == 0) throw ConfigError("K must be positive");
  return c;
}

ordered_json model_config_to_json(const ModelConfig& c) {
  auto strip = [](const SubnetSpec& s) {
    ordered_json j = subnet_to_json(s);
    for (const char* k : {"in_features", "out_features", "frame_shape", "frame_channels"}) {
      j.erase(k);
    }
    return j;
  };
  ordered_json j;
  j["variant"] = to_string(c.variant);
  j["K"] = c.K;
  j["normalization"] = to_string(c.normalization);
  j["branch"] = strip(c.branch);
  j["sensor"] = strip(c.sensor);
  j["trunk"] = strip(c.trunk);
  return j;
}

RunConfig parse_run_config(const ordered_json& j) {
  reject_unknown(j, {"experiment", "data", "model", "train", "eval", "paths"}, "run config");
  RunConfig c;
  try {
    if (j.contains("experiment")) {
      const auto& e = j.at("experiment");
      reject_unknown(e, {"name", "notes"}, "experiment section");
      read_opt(e, "name", c.experiment);
      read_opt(e, "notes", c.notes);
    }
    if (j.contains("data")) c.data = dataset_config_from_json(j.at("data"));
    if (j.contains("model")) {
      c.model = j.at("model");
      // Validates keys and value types up front against a neutral default.
      model_config_from_json(c.model, default_model_config(Layout::temporal, 1));
    }
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      reject_unknown(e, {"baseline"}, "eval section");
      read_opt(e, "baseline", c.eval_baseline);
      if (!c.eval_baseline.empty() && c.eval_baseline != "bicubic_grid" &&
          c.eval_baseline != "idw_scattered") {
        throw ConfigError("eval.baseline must be bicubic_grid, idw_scattered or empty");
      }
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p, {"dataset", "test_dataset", "out"}, "paths section");
      read_opt(p, "dataset", c.dataset_path);
      read_opt(p, "test_dataset", c.test_dataset_path);
      read_opt(p, "out", c.out_dir);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

ordered_json run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["experiment"] = {{"name", c.experiment}, {"notes", c.notes}};
  j["data"] = dataset_config_to_json(c.data);
  j["model"] = c.model;
  j["train"] = train_config_to_json(c.train);
  j["eval"] = {{"baseline", c.eval_baseline}};
  j["paths"] = {{"dataset", c.dataset_path},
                {"test_dataset", c.test_dataset_path},
                {"out", c.out_dir}};
  return j;
}

}  // namespace srop
