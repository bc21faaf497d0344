#include "srop/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "srop/errors.hpp"

namespace srop {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Names

const char* to_string(SubnetKind kind) {
  switch (kind) {
    case SubnetKind::mlp: return "mlp";
    case SubnetKind::lstm_mlp: return "lstm_mlp";
    case SubnetKind::cnn_lstm_mlp: return "cnn_lstm_mlp";
  }
  return "?";
}

SubnetKind subnet_kind_from_string(const std::string& name) {
  if (name == "mlp") return SubnetKind::mlp;
  if (name == "lstm_mlp") return SubnetKind::lstm_mlp;
  if (name == "cnn_lstm_mlp") return SubnetKind::cnn_lstm_mlp;
  throw ConfigError("unknown subnetwork kind '" + name + "'");
}

const char* to_string(Activation act) {
  switch (act) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sin: return "sin";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "sin") return Activation::sin;
  throw ConfigError("unknown activation '" + name + "'");
}

const char* to_string(Variant variant) {
  switch (variant) {
    case Variant::three_net: return "three_net";
    case Variant::two_net: return "two_net";
    case Variant::stack: return "stack";
    case Variant::distance: return "distance";
    case Variant::init_state_only: return "init_state_only";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  for (auto v : {Variant::three_net, Variant::two_net, Variant::stack, Variant::distance,
                 Variant::init_state_only}) {
    if (name == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

const char* to_string(Normalization norm) {
  switch (norm) {
    case Normalization::none: return "none";
    case Normalization::global: return "global";
    case Normalization::instance: return "instance";
  }
  return "?";
}

Normalization normalization_from_string(const std::string& name) {
  if (name == "none") return Normalization::none;
  if (name == "global") return Normalization::global;
  if (name == "instance") return Normalization::instance;
  throw ConfigError("unknown normalization '" + name + "'");
}

// ---------------------------------------------------------------------------
// Spec construction

namespace {

std::size_t product(const std::vector<std::size_t>& v) {
  std::size_t p = 1;
  for (auto x : v) p *= x;
  return p;
}

/// Output spatial shape and channel count after the conv encoder.
std::pair<std::vector<std::size_t>, std::size_t> conv_output(const SubnetSpec& sub) {
  std::vector<std::size_t> shape = sub.frame_shape;
  std::size_t channels = sub.frame_channels;
  for (const auto& layer : sub.conv) {
    for (auto& extent : shape) {
      const std::size_t padded = extent + 2 * layer.padding;
      if (padded < layer.kernel || (padded - layer.kernel) % layer.stride != 0) {
        throw ConfigError("conv layer (k=" + std::to_string(layer.kernel) + ", stride " +
                          std::to_string(layer.stride) + ", padding " +
                          std::to_string(layer.padding) + ") does not tile a frame of size " +
                          std::to_string(extent));
      }
      extent = (padded - layer.kernel) / layer.stride + 1;
    }
    channels = layer.channels;
  }
  return {shape, channels};
}

/// Features per frame entering the LSTM or the per-frame MLP.
std::size_t frame_features(const SubnetSpec& sub) {
  if (sub.kind == SubnetKind::cnn_lstm_mlp) {
    const auto [shape, channels] = conv_output(sub);
    return channels * product(shape);
  }
  return sub.frame_channels * product(sub.frame_shape);
}

std::size_t head_input(const SubnetSpec& sub) {
  return sub.kind == SubnetKind::mlp ? sub.in_features : sub.lstm_hidden;
}

void validate_subnet(const SubnetSpec& sub, const std::string& name) {
  if (sub.out_features == 0) throw ConfigError(name + ": output width must be positive");
  if (sub.in_features == 0) throw ConfigError(name + ": input width must be positive");
  for (auto w : sub.widths) {
    if (w == 0) throw ConfigError(name + ": layer widths must be positive");
  }
  if (sub.kind != SubnetKind::mlp && sub.lstm_hidden == 0) {
    throw ConfigError(name + ": LSTM hidden size must be positive");
  }
  for (const auto& c : sub.conv) {
    if (c.channels == 0 || c.kernel == 0 || c.stride == 0) {
      throw ConfigError(name + ": conv channels, kernel and stride must be positive");
    }
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (K == 0) throw ConfigError("latent width K must be positive");
  if (coord_min.size() != d + 1 || coord_max.size() != d + 1) {
    throw ConfigError("coordinate bounds must have d + 1 entries");
  }
  for (std::size_t a = 0; a <= d; ++a) {
    if (!(coord_max[a] > coord_min[a])) throw ConfigError("empty coordinate range");
  }
  if (!(value_scale > 0.0) || !std::isfinite(value_scale) || !std::isfinite(value_shift)) {
    throw ConfigError("value scale must be positive and finite");
  }
  validate_subnet(branch, "branch");
  validate_subnet(trunk, "trunk");
  if (uses_sensor_net()) validate_subnet(sensor, "sensor");
  const std::size_t sensor_out = layout == Layout::temporal ? T_out * K : K;
  if (branch.out_features != K || trunk.out_features != K ||
      (uses_sensor_net() && sensor.out_features != sensor_out)) {
    throw ConfigError("branch, sensor and trunk disagree on the latent width K");
  }
  if (layout == Layout::spacetime) {
    if (branch.kind != SubnetKind::mlp) {
      throw ConfigError("spacetime layout needs an mlp branch");
    }
    if (variant == Variant::init_state_only) {
      throw ConfigError("init_state_only needs the temporal layout");
    }
  } else {
    const std::size_t t_in = variant == Variant::init_state_only ? 1 : T;
    if (t_in != T_out && variant != Variant::init_state_only && !branch.time_upscale) {
      throw ConfigError("branch maps " + std::to_string(T) + " frames to " +
                        std::to_string(T_out) + " only with time_upscale enabled");
    }
    if (branch.time_upscale && T_out < T) {
      throw ConfigError("time upscaling cannot reduce " + std::to_string(T) + " frames to " +
                        std::to_string(T_out));
    }
    if (branch.kind == SubnetKind::cnn_lstm_mlp && branch.frame_shape.size() != 2) {
      throw ConfigError("cnn_lstm_mlp branch needs 2-D frames");
    }
  }
}

ModelSpec make_model_spec(const DatasetHeader& header, const ModelConfig& config) {
  ModelSpec spec;
  spec.layout = header.layout;
  spec.variant = config.variant;
  spec.d = header.d;
  spec.s = header.s;
  spec.K = config.K;
  spec.coord_min = header.coord_min;
  spec.coord_max = header.coord_max;
  spec.normalization = config.normalization;
  spec.branch = config.branch;
  spec.sensor = config.sensor;
  spec.trunk = config.trunk;
  const std::size_t rows = spec.coord_rows();

  if (config.variant == Variant::distance && header.query_cols() != rows) {
    throw ConfigError("distance variant needs query and sensor coordinates of equal width");
  }

  auto& b = spec.branch;
  if (spec.layout == Layout::temporal) {
    spec.T = header.lr_shape.at(0);
    spec.T_out = header.hr_frames;
    if (config.variant == Variant::init_state_only) {
      const std::size_t m = header.hr_query_count;
      if (header.d == 1) {
        b.frame_shape = {m};
      } else {
        const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(m))));
        if (n * n != m) throw ConfigError("init_state_only needs a square HR grid");
        b.frame_shape = {n, n};
      }
      b.frame_channels = 1;
    } else {
      b.frame_shape.assign(header.lr_shape.begin() + 1, header.lr_shape.end());
      b.frame_channels = config.variant == Variant::stack ? rows + 1 : 1;
    }
    const std::size_t per_frame = frame_features(b);
    b.in_features = per_frame;
  } else {
    spec.T = 1;
    spec.T_out = 1;
    b.frame_shape = {header.s};
    b.frame_channels = config.variant == Variant::stack ? rows + 1 : 1;
    b.in_features = b.frame_channels * header.s;
  }
  b.out_features = spec.K;

  spec.sensor.in_features = rows * header.s;
  spec.sensor.out_features = spec.layout == Layout::temporal ? spec.T_out * spec.K : spec.K;

  spec.trunk.in_features =
      config.variant == Variant::distance ? rows * header.s : header.query_cols();
  spec.trunk.out_features = spec.K;
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// JSON

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

}  // namespace

ordered_json subnet_to_json(const SubnetSpec& s) {
  ordered_json j;
  j["kind"] = to_string(s.kind);
  j["time_upscale"] = s.time_upscale;
  j["widths"] = s.widths;
  j["activation"] = to_string(s.activation);
  j["lstm_hidden"] = s.lstm_hidden;
  ordered_json conv = ordered_json::array();
  for (const auto& c : s.conv) {
    conv.push_back({{"channels", c.channels},
                    {"kernel", c.kernel},
                    {"stride", c.stride},
                    {"padding", c.padding}});
  }
  j["conv"] = conv;
  j["in_features"] = s.in_features;
  j["out_features"] = s.out_features;
  j["frame_shape"] = s.frame_shape;
  j["frame_channels"] = s.frame_channels;
  return j;
}

SubnetSpec subnet_from_json(const ordered_json& j) {
  reject_unknown(j,
                 {"kind", "time_upscale", "widths", "activation", "lstm_hidden", "conv",
                  "in_features", "out_features", "frame_shape", "frame_channels"},
                 "subnetwork spec");
  SubnetSpec s;
  try {
    if (j.contains("kind")) s.kind = subnet_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("activation")) {
      s.activation = activation_from_string(j.at("activation").get<std::string>());
    }
    read_opt(j, "time_upscale", s.time_upscale);
    read_opt(j, "widths", s.widths);
    read_opt(j, "lstm_hidden", s.lstm_hidden);
    read_opt(j, "in_features", s.in_features);
    read_opt(j, "out_features", s.out_features);
    read_opt(j, "frame_shape", s.frame_shape);
    read_opt(j, "frame_channels", s.frame_channels);
    if (j.contains("conv")) {
      for (const auto& c : j.at("conv")) {
        reject_unknown(c, {"channels", "kernel", "stride", "padding"}, "conv layer");
        ConvLayer layer;
        read_opt(c, "channels", layer.channels);
        read_opt(c, "kernel", layer.kernel);
        read_opt(c, "stride", layer.stride);
        read_opt(c, "padding", layer.padding);
        s.conv.push_back(layer);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad subnetwork spec: ") + e.what());
  }
  return s;
}

ordered_json spec_to_json(const ModelSpec& spec) {
  ordered_json j;
  j["layout"] = to_string(spec.layout);
  j["variant"] = to_string(spec.variant);
  j["d"] = spec.d;
  j["s"] = spec.s;
  j["K"] = spec.K;
  j["T"] = spec.T;
  j["T_out"] = spec.T_out;
  j["coord_min"] = spec.coord_min;
  j["coord_max"] = spec.coord_max;
  j["normalization"] = to_string(spec.normalization);
  j["value_shift"] = spec.value_shift;
  j["value_scale"] = spec.value_scale;
  j["branch"] = subnet_to_json(spec.branch);
  j["sensor"] = subnet_to_json(spec.sensor);
  j["trunk"] = subnet_to_json(spec.trunk);
  return j;
}

ModelSpec spec_from_json(const ordered_json& j) {
  ModelSpec spec;
  try {
    spec.layout = layout_from_string(j.at("layout").get<std::string>());
    spec.variant = variant_from_string(j.at("variant").get<std::string>());
    spec.d = j.at("d").get<std::size_t>();
    spec.s = j.at("s").get<std::size_t>();
    spec.K = j.at("K").get<std::size_t>();
    spec.T = j.at("T").get<std::size_t>();
    spec.T_out = j.at("T_out").get<std::size_t>();
    spec.coord_min = j.at("coord_min").get<std::vector<double>>();
    spec.coord_max = j.at("coord_max").get<std::vector<double>>();
    spec.normalization = normalization_from_string(j.at("normalization").get<std::string>());
    spec.value_shift = j.at("value_shift").get<double>();
    spec.value_scale = j.at("value_scale").get<double>();
    spec.branch = subnet_from_json(j.at("branch"));
    spec.sensor = subnet_from_json(j.at("sensor"));
    spec.trunk = subnet_from_json(j.at("trunk"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Parameters

void ModelParams::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  entries_.emplace_back(name, std::move(tensor));
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ConfigError("missing parameter '" + name + "'");
}

bool ModelParams::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [n, t] : entries_) out.add(n, t.clone());
  return out;
}

void ModelParams::round_to_float() {
  for (auto& e : entries_) {
    for (double& v : e.second.mutable_values()) v = static_cast<double>(static_cast<float>(v));
  }
}

namespace {

struct ParamShape {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;  // 0 marks a bias (zero-initialized)
};

void mlp_shapes(const SubnetSpec& sub, std::size_t in, const std::string& prefix,
                std::vector<ParamShape>& out) {
  std::size_t prev = in;
  std::vector<std::size_t> sizes = sub.widths;
  sizes.push_back(sub.out_features);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::string base = prefix + ".mlp" + std::to_string(i);
    out.push_back({base + ".weight", {prev, sizes[i]}, prev, sizes[i]});
    out.push_back({base + ".bias", {sizes[i]}, 0, 0});
    prev = sizes[i];
  }
}

void subnet_shapes(const ModelSpec& spec, const SubnetSpec& sub, const std::string& prefix,
                   bool temporal_branch, std::vector<ParamShape>& out) {
  if (temporal_branch && sub.kind == SubnetKind::cnn_lstm_mlp) {
    std::size_t cin = sub.frame_channels;
    for (std::size_t i = 0; i < sub.conv.size(); ++i) {
      const auto& c = sub.conv[i];
      const std::string base = prefix + ".conv" + std::to_string(i);
      const std::size_t k2 = c.kernel * c.kernel;
      out.push_back({base + ".weight", {c.channels, cin, c.kernel, c.kernel}, cin * k2,
                     c.channels * k2});
      out.push_back({base + ".bias", {c.channels}, 0, 0});
      cin = c.channels;
    }
  }
  if (temporal_branch && sub.kind != SubnetKind::mlp) {
    const std::size_t f = frame_features(sub);
    const std::size_t h = sub.lstm_hidden;
    out.push_back({prefix + ".lstm.input_weights", {f, 4 * h}, f, 4 * h});
    out.push_back({prefix + ".lstm.hidden_weights", {h, 4 * h}, h, 4 * h});
    out.push_back({prefix + ".lstm.bias", {4 * h}, 0, 0});
  }
  (void)spec;
  mlp_shapes(sub, temporal_branch ? head_input(sub) : sub.in_features, prefix, out);
}

std::vector<ParamShape> param_shapes(const ModelSpec& spec) {
  std::vector<ParamShape> out;
  subnet_shapes(spec, spec.branch, "branch", spec.layout == Layout::temporal, out);
  if (spec.uses_sensor_net()) subnet_shapes(spec, spec.sensor, "sensor", false, out);
  subnet_shapes(spec, spec.trunk, "trunk", false, out);
  out.push_back({"combination_bias", {1}, 0, 0});
  return out;
}

}  // namespace

std::size_t expected_param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& p : param_shapes(spec)) n += shape_numel(p.shape);
  return n;
}

ModelParams init_params(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  ModelParams params;
  for (const auto& p : param_shapes(spec)) {
    std::vector<double> values(shape_numel(p.shape), 0.0);
    if (p.fan_out != 0) {
      const double bound = std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
      for (double& v : values) {
        float f = static_cast<float>(rng.uniform(-bound, bound));
        if (std::abs(static_cast<double>(f)) > bound) f = std::nextafter(f, 0.0f);
        v = f;
      }
    }
    params.add(p.name, Tensor(p.shape, std::move(values), true));
  }
  return params;
}

std::uint64_t param_checksum(const ModelParams& params) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [name, t] : params.entries()) {
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xFFu;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Building blocks

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::tanh: return tanh(x);
    case Activation::relu: return relu(x);
    case Activation::sin: return sin(x);
  }
  return x;
}

Tensor mlp_forward(const SubnetSpec& spec, const ModelParams& params, const std::string& prefix,
                   const Tensor& input) {
  Tensor x = input.rank() == 1 ? reshape(input, {1, input.numel()}) : input;
  const std::size_t layers = spec.widths.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string base = prefix + ".mlp" + std::to_string(i);
    const Tensor& w = params.at(base + ".weight");
    if (x.dim(1) != w.dim(0)) {
      throw DimensionError(prefix + ": input width " + std::to_string(x.dim(1)) +
                           " does not match layer " + std::to_string(i) + " " +
                           shape_str(w.shape()));
    }
    x = add_row_bias(matmul(x, w), params.at(base + ".bias"));
    if (i + 1 < layers) x = activate(x, spec.activation);
  }
  return input.rank() == 1 ? reshape(x, {x.numel()}) : x;
}

std::vector<double> time_upscale_matrix(std::size_t t_in, std::size_t t_out) {
  if (t_in < 2) throw ConfigError("time upscaling needs at least 2 input frames");
  if (t_out < t_in) {
    throw ConfigError("time upscaling cannot reduce " + std::to_string(t_in) + " frames to " +
                      std::to_string(t_out));
  }
  std::vector<double> w(t_out * t_in, 0.0);
  for (std::size_t i = 0; i < t_out; ++i) {
    const double pos = static_cast<double>(i * (t_in - 1)) / static_cast<double>(t_out - 1);
    auto j0 = static_cast<std::size_t>(std::floor(pos));
    if (j0 > t_in - 2) j0 = t_in - 2;
    const double frac = pos - static_cast<double>(j0);
    w[i * t_in + j0] += 1.0 - frac;
    w[i * t_in + j0 + 1] += frac;
  }
  return w;
}

Tensor time_upscale(const Tensor& field, std::size_t t_out) {
  if (field.rank() < 1) throw DimensionError("time_upscale: field needs a frame axis");
  const std::size_t t_in = field.dim(0);
  const std::size_t rest = field.numel() / t_in;
  Tensor w({t_out, t_in}, time_upscale_matrix(t_in, t_out));
  Shape out_shape = field.shape();
  out_shape[0] = t_out;
  return reshape(matmul(w, reshape(field, {t_in, rest})), out_shape);
}

// ---------------------------------------------------------------------------
// Subnetworks

namespace {

/// Frames [n x F] for each output frame of a temporal branch.
std::vector<Tensor> branch_frames(const ModelSpec& spec, const Tensor& u, std::size_t n) {
  const auto& b = spec.branch;
  const std::size_t f = b.frame_channels * product(b.frame_shape);
  const std::size_t t_in = spec.variant == Variant::init_state_only ? 1 : spec.T;
  if (u.rank() != 2 || u.dim(0) != n || u.dim(1) != t_in * f) {
    throw DimensionError("branch: expected input [" + std::to_string(n) + " x " +
                         std::to_string(t_in * f) + "], got " + shape_str(u.shape()));
  }
  std::vector<Tensor> in_frames;
  in_frames.reserve(t_in);
  for (std::size_t j = 0; j < t_in; ++j) in_frames.push_back(slice_cols(u, j * f, (j + 1) * f));

  std::vector<Tensor> frames;
  frames.reserve(spec.T_out);
  if (t_in == 1) {
    frames.assign(spec.T_out, in_frames[0]);
  } else if (t_in == spec.T_out) {
    frames = in_frames;
  } else {
    const auto w = time_upscale_matrix(t_in, spec.T_out);
    for (std::size_t i = 0; i < spec.T_out; ++i) {
      Tensor acc;
      for (std::size_t j = 0; j < t_in; ++j) {
        const double c = w[i * t_in + j];
        if (c == 0.0) continue;
        Tensor term = c == 1.0 ? in_frames[j] : scale(in_frames[j], c);
        acc = acc.defined() ? acc + term : term;
      }
      frames.push_back(acc);
    }
  }
  return frames;
}

}  // namespace

Tensor branch_forward(const ModelSpec& spec, const ModelParams& params, const Tensor& u,
                      std::size_t n) {
  const auto& b = spec.branch;
  if (spec.layout == Layout::spacetime) {
    if (u.rank() != 2 || u.dim(0) != n || u.dim(1) != b.in_features) {
      throw DimensionError("branch: expected input [" + std::to_string(n) + " x " +
                           std::to_string(b.in_features) + "], got " + shape_str(u.shape()));
    }
    return mlp_forward(b, params, "branch", u);
  }

  auto frames = branch_frames(spec, u, n);
  const std::size_t t_out = frames.size();
  if (b.kind == SubnetKind::cnn_lstm_mlp) {
    Tensor x = concat_rows(frames);
    Shape img{t_out * n, b.frame_channels, b.frame_shape[0], b.frame_shape[1]};
    x = reshape(x, img);
    for (std::size_t i = 0; i < b.conv.size(); ++i) {
      const std::string base = "branch.conv" + std::to_string(i);
      x = activate(conv2d(x, params.at(base + ".weight"), params.at(base + ".bias"),
                          b.conv[i].stride, b.conv[i].padding),
                   b.activation);
    }
    x = reshape(x, {t_out * n, x.numel() / (t_out * n)});
    for (std::size_t i = 0; i < t_out; ++i) frames[i] = slice_rows(x, i * n, (i + 1) * n);
  }
  if (b.kind == SubnetKind::mlp) {
    return mlp_forward(b, params, "branch", concat_rows(frames));
  }
  const LstmWeights lw{params.at("branch.lstm.input_weights"),
                       params.at("branch.lstm.hidden_weights"), params.at("branch.lstm.bias")};
  Tensor h = Tensor::zeros({n, b.lstm_hidden});
  Tensor c = Tensor::zeros({n, b.lstm_hidden});
  std::vector<Tensor> hidden;
  hidden.reserve(t_out);
  for (const auto& x : frames) {
    auto state = lstm_step(x, h, c, lw);
    h = state.h;
    c = state.c;
    hidden.push_back(h);
  }
  return mlp_forward(b, params, "branch", concat_rows(hidden));
}

Tensor sensor_forward(const ModelSpec& spec, const ModelParams& params, const Tensor& x,
                      std::size_t n) {
  if (x.rank() != 2 || x.dim(0) != n || x.dim(1) != spec.sensor.in_features) {
    throw DimensionError("sensor: expected input [" + std::to_string(n) + " x " +
                         std::to_string(spec.sensor.in_features) + "], got " +
                         shape_str(x.shape()));
  }
  Tensor out = mlp_forward(spec.sensor, params, "sensor", x);
  if (spec.layout == Layout::spacetime) return out;
  std::vector<Tensor> frames;
  frames.reserve(spec.T_out);
  for (std::size_t i = 0; i < spec.T_out; ++i) {
    frames.push_back(slice_cols(out, i * spec.K, (i + 1) * spec.K));
  }
  return concat_rows(frames);
}

Tensor trunk_forward(const ModelSpec& spec, const ModelParams& params, const Tensor& y) {
  if (y.rank() != 2 || y.dim(1) != spec.trunk.in_features) {
    throw DimensionError("trunk: expected input [M x " + std::to_string(spec.trunk.in_features) +
                         "], got " + shape_str(y.shape()));
  }
  return mlp_forward(spec.trunk, params, "trunk", y);
}

Tensor combine_temporal(const Tensor& B, const Tensor& S, const Tensor& Tq, const Tensor& bias) {
  if (B.rank() != 2 || Tq.rank() != 2 || B.dim(1) != Tq.dim(1)) {
    throw ConfigError("combination: latent widths disagree (" + shape_str(B.shape()) + " vs " +
                      shape_str(Tq.shape()) + ")");
  }
  if (S.defined() && S.shape() != B.shape()) {
    throw ConfigError("combination: sensor output " + shape_str(S.shape()) +
                      " does not match branch " + shape_str(B.shape()));
  }
  const Tensor bs = S.defined() ? B * S : B;
  return matmul(bs, transpose(Tq)) + bias;
}

Tensor combine_spacetime(const Tensor& B, const Tensor& S, const Tensor& Tq,
                         std::span<const std::size_t> owner, const Tensor& bias) {
  if (B.rank() != 2 || Tq.rank() != 2 || B.dim(1) != Tq.dim(1)) {
    throw ConfigError("combination: latent widths disagree (" + shape_str(B.shape()) + " vs " +
                      shape_str(Tq.shape()) + ")");
  }
  if (S.defined() && S.shape() != B.shape()) {
    throw ConfigError("combination: sensor output " + shape_str(S.shape()) +
                      " does not match branch " + shape_str(B.shape()));
  }
  if (owner.size() != Tq.dim(0)) {
    throw DimensionError("combination: one owner per query row required");
  }
  const Tensor bs = S.defined() ? B * S : B;
  return row_sum(gather_rows(bs, owner) * Tq) + bias;
}

double sropnet_eval(std::span<const double> b, std::span<const double> s,
                    std::span<const double> t, double bias) {
  if (b.size() != t.size() || (!s.empty() && s.size() != b.size())) {
    throw ConfigError("sropnet_eval: latent widths disagree");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) acc += b[k] * (s.empty() ? 1.0 : s[k]) * t[k];
  return acc + bias;
}

// ---------------------------------------------------------------------------
// Preprocessing

double normalize_coord(const ModelSpec& spec, std::size_t axis, double v) {
  const double lo = spec.coord_min.at(axis), hi = spec.coord_max.at(axis);
  return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

std::vector<double> stack_inputs(std::span<const double> x, std::size_t rows, std::size_t s,
                                 std::span<const double> u) {
  if (x.size() != rows * s || u.size() != s) {
    throw DimensionError("stack: sensor coordinates and field sizes disagree");
  }
  std::vector<double> out(x.begin(), x.end());
  out.insert(out.end(), u.begin(), u.end());
  return out;
}

std::vector<double> distance_inputs(std::span<const double> y, std::span<const double> x,
                                    std::size_t rows, std::size_t s) {
  if (y.size() != rows || x.size() != rows * s) {
    throw ConfigError("distance variant needs query and sensor coordinates of equal width");
  }
  std::vector<double> out(rows * s);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < s; ++j) out[r * s + j] = y[r] - x[r * s + j];
  }
  return out;
}

namespace {

std::vector<double> normalized_sensors(const ModelSpec& spec, std::span<const float> coords) {
  const std::size_t rows = spec.coord_rows();
  if (coords.size() != rows * spec.s) {
    throw DimensionError("sensor coordinates: expected " + std::to_string(rows * spec.s) +
                         " values, got " + std::to_string(coords.size()));
  }
  std::vector<double> out(coords.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < spec.s; ++j) {
      out[r * spec.s + j] = normalize_coord(spec, r, coords[r * spec.s + j]);
    }
  }
  return out;
}

double sample_scale(const ModelSpec& spec, std::span<const float> field) {
  if (spec.normalization == Normalization::none) return 1.0;
  if (spec.normalization == Normalization::global) return spec.value_scale;
  double ss = 0.0;
  for (float v : field) ss += static_cast<double>(v) * v;
  const double rms = field.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(field.size()));
  return rms > 1e-12 ? rms : 1.0;
}

}  // namespace

PreparedBatch prepare_batch(const ModelSpec& spec, std::span<const SampleView> samples) {
  PreparedBatch batch;
  batch.n = samples.size();
  if (batch.n == 0) throw ContractError("prepare_batch: empty batch");
  const std::size_t rows = spec.coord_rows();
  const bool init_only = spec.variant == Variant::init_state_only;
  const double shift = spec.normalization == Normalization::global ? spec.value_shift : 0.0;

  std::vector<double> branch_values;
  std::vector<double> sensor_values;
  for (const auto& sv : samples) {
    const auto field = init_only ? sv.init_frame : sv.lr_field;
    const double sc = sample_scale(spec, field);
    batch.scales.push_back(sc);
    std::vector<double> u(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) u[i] = (field[i] - shift) / sc;

    if (spec.variant == Variant::stack) {
      const auto x = normalized_sensors(spec, sv.sensor_coords);
      const std::size_t frames = spec.layout == Layout::temporal ? spec.T : 1;
      if (u.size() != frames * spec.s) {
        throw DimensionError("stack: field size does not match the sensor count");
      }
      for (std::size_t t = 0; t < frames; ++t) {
        const auto stacked =
            stack_inputs(x, rows, spec.s, std::span<const double>(u).subspan(t * spec.s, spec.s));
        branch_values.insert(branch_values.end(), stacked.begin(), stacked.end());
      }
    } else {
      branch_values.insert(branch_values.end(), u.begin(), u.end());
    }
    if (spec.uses_sensor_net()) {
      const auto x = normalized_sensors(spec, sv.sensor_coords);
      sensor_values.insert(sensor_values.end(), x.begin(), x.end());
    }
  }
  const std::size_t width = branch_values.size() / batch.n;
  if (width * batch.n != branch_values.size()) {
    throw DimensionError("prepare_batch: samples have different input sizes");
  }
  batch.branch_input = Tensor({batch.n, width}, std::move(branch_values));
  if (spec.uses_sensor_net()) {
    batch.sensor_input = Tensor({batch.n, rows * spec.s}, std::move(sensor_values));
  }
  return batch;
}

Tensor trunk_input(const ModelSpec& spec, std::span<const double> queries, std::size_t m,
                   std::span<const float> sensor_coords) {
  const std::size_t cols = spec.coord_rows();
  if (queries.size() != m * cols) {
    throw DimensionError("queries: expected " + std::to_string(m * cols) + " values, got " +
                         std::to_string(queries.size()));
  }
  std::vector<double> y(queries.size());
  for (std::size_t q = 0; q < m; ++q) {
    for (std::size_t a = 0; a < cols; ++a) {
      y[q * cols + a] = normalize_coord(spec, a, queries[q * cols + a]);
    }
  }
  if (spec.variant != Variant::distance) return Tensor({m, cols}, std::move(y));
  const auto x = normalized_sensors(spec, sensor_coords);
  std::vector<double> out;
  out.reserve(m * cols * spec.s);
  for (std::size_t q = 0; q < m; ++q) {
    const auto diff =
        distance_inputs(std::span<const double>(y).subspan(q * cols, cols), x, cols, spec.s);
    out.insert(out.end(), diff.begin(), diff.end());
  }
  return Tensor({m, cols * spec.s}, std::move(out));
}

Tensor forward_temporal(const ModelSpec& spec, const ModelParams& params,
                        const PreparedBatch& batch, const Tensor& trunk_in) {
  if (spec.layout != Layout::temporal) throw ConfigError("forward_temporal on a spacetime model");
  const Tensor B = branch_forward(spec, params, batch.branch_input, batch.n);
  const Tensor S = spec.uses_sensor_net()
                       ? sensor_forward(spec, params, batch.sensor_input, batch.n)
                       : Tensor();
  const Tensor Tq = trunk_forward(spec, params, trunk_in);
  return combine_temporal(B, S, Tq, params.at("combination_bias"));
}

Tensor forward_spacetime(const ModelSpec& spec, const ModelParams& params,
                         const PreparedBatch& batch, const Tensor& trunk_in,
                         std::span<const std::size_t> owner) {
  if (spec.layout != Layout::spacetime) throw ConfigError("forward_spacetime on a temporal model");
  const Tensor B = branch_forward(spec, params, batch.branch_input, batch.n);
  const Tensor S = spec.uses_sensor_net()
                       ? sensor_forward(spec, params, batch.sensor_input, batch.n)
                       : Tensor();
  const Tensor Tq = trunk_forward(spec, params, trunk_in);
  return combine_spacetime(B, S, Tq, owner, params.at("combination_bias"));
}

std::vector<double> predict(const ModelSpec& spec, const ModelParams& params,
                            const SampleView& sample, std::span<const double> queries,
                            std::size_t m) {
  NoGradGuard guard;
  const PreparedBatch batch = prepare_batch(spec, std::span<const SampleView>(&sample, 1));
  const Tensor y = trunk_input(spec, queries, m, sample.sensor_coords);
  Tensor out;
  if (spec.layout == Layout::temporal) {
    out = forward_temporal(spec, params, batch, y);
  } else {
    const std::vector<std::size_t> owner(m, 0);
    out = forward_spacetime(spec, params, batch, y, owner);
  }
  const double shift = spec.normalization == Normalization::global ? spec.value_shift : 0.0;
  const double sc = batch.scales[0];
  std::vector<double> result(out.values().begin(), out.values().end());
  for (double& v : result) v = v * sc + shift;
  return result;
}

SampleView sample_view(const Dataset& ds, std::size_t index) {
  const auto& r = ds.samples.at(index);
  SampleView v;
  v.lr_field = r.lr_field;
  v.sensor_coords = r.sensor_coords;
  if (ds.header.layout == Layout::temporal) {
    v.init_frame = std::span<const float>(r.hr_targets).first(ds.header.hr_query_count);
  }
  return v;
}

std::vector<double> predict_sample(const ModelSpec& spec, const ModelParams& params,
                                   const Dataset& ds, std::size_t index) {
  const auto& r = ds.samples.at(index);
  std::vector<double> q(r.query_coords.begin(), r.query_coords.end());
  return predict(spec, params, sample_view(ds, index), q, ds.header.hr_query_count);
}

void check_compatible(const ModelSpec& spec, const DatasetHeader& h) {
  auto fail = [&](const std::string& what) {
    throw ConfigError("model and dataset are incompatible: " + what);
  };
  if (spec.layout != h.layout) {
    fail(std::string("model layout ") + to_string(spec.layout) + " vs dataset layout " +
         to_string(h.layout));
  }
  if (spec.d != h.d) fail("spatial dimension " + std::to_string(spec.d) + " vs " +
                          std::to_string(h.d));
  if (spec.s != h.s) fail("sensor count " + std::to_string(spec.s) + " vs " +
                          std::to_string(h.s));
  if (spec.layout == Layout::temporal) {
    if (spec.T_out != h.hr_frames) {
      fail("output frames " + std::to_string(spec.T_out) + " vs " + std::to_string(h.hr_frames));
    }
    if (spec.variant != Variant::init_state_only) {
      if (h.lr_shape.empty() || spec.T != h.lr_shape[0]) fail("low-resolution frame count");
      const std::vector<std::size_t> frame(h.lr_shape.begin() + 1, h.lr_shape.end());
      if (frame != spec.branch.frame_shape) fail("low-resolution frame shape");
    } else if (product(spec.branch.frame_shape) != h.hr_query_count) {
      fail("high-resolution frame size");
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointTag = "SROPCKPT1";

void put_float(std::string& buf, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  ordered_json manifest;
  manifest["format"] = kCheckpointTag;
  manifest["endianness"] = "little";
  manifest["spec"] = spec_to_json(ckpt.spec);
  ordered_json table = ordered_json::array();
  std::string blob;
  for (const auto& [name, t] : ckpt.params.entries()) {
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", blob.size()}});
    for (double v : t.values()) {
      if (!std::isfinite(v)) throw NumericalError("parameter '" + name + "' is not finite");
      put_float(blob, v);
    }
  }
  manifest["tensors"] = table;
  manifest["blob_bytes"] = blob.size();
  manifest["extra"] = ckpt.extra;
  out << manifest.dump() << '\n';
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error("failed to write checkpoint");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  save_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing checkpoint manifest at byte offset 0");
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", std::string{}) != kCheckpointTag) {
    throw FormatError("not a SROPCKPT1 checkpoint");
  }
  const std::uint64_t base = line.size() + 1;
  Checkpoint ckpt;
  std::size_t blob_bytes = 0;
  try {
    ckpt.spec = spec_from_json(manifest.at("spec"));
    blob_bytes = manifest.at("blob_bytes").get<std::size_t>();
    if (manifest.contains("extra")) ckpt.extra = manifest.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  std::string blob(blob_bytes, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob_bytes));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != blob_bytes) {
    throw FormatError("checkpoint truncated at byte offset " + std::to_string(base + got) +
                      " (expected " + std::to_string(blob_bytes) + " blob bytes)");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after checkpoint blob at byte offset " +
                      std::to_string(base + blob_bytes));
  }
  try {
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = shape_numel(shape);
      if (offset + 4 * count > blob_bytes) {
        throw FormatError("tensor '" + name + "' runs past the blob end at byte offset " +
                          std::to_string(base + offset));
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(blob[offset + 4 * i + b]))
                  << (8 * b);
        }
        values[i] = std::bit_cast<float>(bits);
        if (!std::isfinite(values[i])) {
          throw FormatError("non-finite value in '" + name + "' at byte offset " +
                            std::to_string(base + offset + 4 * i));
        }
      }
      ckpt.params.add(name, Tensor(shape, std::move(values), true));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint tensor table: ") + e.what());
  }
  if (ckpt.params.count() != expected_param_count(ckpt.spec)) {
    throw FormatError("checkpoint holds " + std::to_string(ckpt.params.count()) +
                      " parameters, the model spec implies " +
                      std::to_string(expected_param_count(ckpt.spec)));
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in);
}

}  // namespace srop
