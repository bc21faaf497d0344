#pragma once

// SROpNet: branch, sensor and trunk subnetworks combined through a latent
// triple product, in spacetime (one value per query) or temporal (one value
// per query and output frame) form.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "srop/dataset.hpp"
#include "srop/rng.hpp"
#include "srop/tensor.hpp"

namespace srop {

enum class SubnetKind { mlp, lstm_mlp, cnn_lstm_mlp };
enum class Activation { tanh, relu, sin };
enum class Variant { three_net, two_net, stack, distance, init_state_only };
enum class Normalization { none, global, instance };

const char* to_string(SubnetKind kind);
SubnetKind subnet_kind_from_string(const std::string& name);
const char* to_string(Activation act);
Activation activation_from_string(const std::string& name);
const char* to_string(Variant variant);
Variant variant_from_string(const std::string& name);
const char* to_string(Normalization norm);
Normalization normalization_from_string(const std::string& name);

struct ConvLayer {
  std::size_t channels = 4;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

/// One subnetwork. Input sizes are filled in by make_model_spec.
struct SubnetSpec {
  SubnetKind kind = SubnetKind::mlp;
  bool time_upscale = false;
  std::vector<std::size_t> widths{128, 128, 128};
  Activation activation = Activation::tanh;
  std::size_t lstm_hidden = 64;
  std::vector<ConvLayer> conv;

  /// Input features of the first MLP (or LSTM) layer.
  std::size_t in_features = 0;
  /// Output features of the final layer (K, or T+ * K for the temporal sensor net).
  std::size_t out_features = 0;
  /// Spatial frame shape and channel count seen by a temporal branch.
  std::vector<std::size_t> frame_shape;
  std::size_t frame_channels = 1;
};

struct ModelSpec {
  Layout layout = Layout::temporal;
  Variant variant = Variant::three_net;
  std::size_t d = 1;
  std::size_t s = 0;
  std::size_t K = 64;
  /// Temporal layout: LR frames in, output frames out.
  std::size_t T = 1;
  std::size_t T_out = 1;
  std::vector<double> coord_min;
  std::vector<double> coord_max;
  Normalization normalization = Normalization::none;
  double value_shift = 0.0;
  double value_scale = 1.0;
  SubnetSpec branch;
  SubnetSpec sensor;
  SubnetSpec trunk;

  bool uses_sensor_net() const { return variant == Variant::three_net; }
  /// Width of one sensor-coordinate column (d or d + 1).
  std::size_t coord_rows() const { return layout == Layout::spacetime ? d + 1 : d; }
  void validate() const;
};

/// User-facing architecture choices; everything else follows from the dataset.
struct ModelConfig {
  Variant variant = Variant::three_net;
  std::size_t K = 64;
  Normalization normalization = Normalization::global;
  SubnetSpec branch;
  SubnetSpec sensor;
  SubnetSpec trunk;
};

ModelSpec make_model_spec(const DatasetHeader& header, const ModelConfig& config);

nlohmann::ordered_json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json subnet_to_json(const SubnetSpec& spec);
SubnetSpec subnet_from_json(const nlohmann::ordered_json& j);

/// Named parameter tensors in a fixed order. combination_bias has shape {1}.
class ModelParams {
 public:
  void add(const std::string& name, Tensor tensor);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t count() const;
  ModelParams clone() const;
  /// Rounds every value to the nearest float32.
  void round_to_float();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Parameter count implied by the model spec.
std::size_t expected_param_count(const ModelSpec& spec);

/// Glorot-uniform weights, zero biases, zero combination bias; float32-rounded.
ModelParams init_params(const ModelSpec& spec, Rng& rng);

/// FNV-1a over the float32 bytes of every parameter in order.
std::uint64_t param_checksum(const ModelParams& params);

// ---------------------------------------------------------------------------
// Building blocks

Tensor activate(const Tensor& x, Activation act);

/// Affine-activation stack with a linear last layer. `prefix` names the layers
/// ("<prefix>.mlp<i>.weight" [in x out], "<prefix>.mlp<i>.bias" [out]).
Tensor mlp_forward(const SubnetSpec& spec, const ModelParams& params, const std::string& prefix,
                   const Tensor& input);

/// Linear interpolation along axis 0 onto t_out uniformly spaced frames.
Tensor time_upscale(const Tensor& field, std::size_t t_out);
/// Interpolation matrix [t_out x t_in] used by time_upscale.
std::vector<double> time_upscale_matrix(std::size_t t_in, std::size_t t_out);

// ---------------------------------------------------------------------------
// Subnetworks. Batched inputs carry the sample index as the leading axis.

/// Spacetime: u [n x features] -> [n x K].
/// Temporal: u [n x T x features] flattened as [n x (T * features)] -> [(T+ * n) x K],
/// row i * n + b holds frame i of sample b.
Tensor branch_forward(const ModelSpec& spec, const ModelParams& params, const Tensor& u,
                      std::size_t n);

/// x [n x (rows * s)] -> [n x K] (spacetime) or [(T+ * n) x K] (temporal).
Tensor sensor_forward(const ModelSpec& spec, const ModelParams& params, const Tensor& x,
                      std::size_t n);

/// y [M x width] -> [M x K].
Tensor trunk_forward(const ModelSpec& spec, const ModelParams& params, const Tensor& y);

/// Temporal combination: out[r, m] = sum_k B[r,k] S[r,k] Tq[m,k] + bias.
/// An undefined S stands for S = 1.
Tensor combine_temporal(const Tensor& B, const Tensor& S, const Tensor& Tq, const Tensor& bias);
/// Spacetime combination for queries owned by samples: out[q] =
/// sum_k B[owner q, k] S[owner q, k] Tq[q, k] + bias.
Tensor combine_spacetime(const Tensor& B, const Tensor& S, const Tensor& Tq,
                         std::span<const std::size_t> owner, const Tensor& bias);

// ---------------------------------------------------------------------------
// Whole-model evaluation

/// Raw per-sample inputs before preprocessing.
struct SampleView {
  std::span<const float> lr_field;
  std::span<const float> sensor_coords;
  /// HR initial frame (init_state_only variant).
  std::span<const float> init_frame;
};

/// Subnetwork inputs after the variant transform, batched over samples.
struct PreparedBatch {
  std::size_t n = 0;
  Tensor branch_input;
  Tensor sensor_input;
  /// Per-sample scale for instance normalization (else value_scale).
  std::vector<double> scales;
};

PreparedBatch prepare_batch(const ModelSpec& spec, std::span<const SampleView> samples);

/// Stack variant helper: rows of x followed by u as one extra row.
std::vector<double> stack_inputs(std::span<const double> x, std::size_t rows, std::size_t s,
                                 std::span<const double> u);
/// Distance variant helper: the [rows x s] array y - x_j (column j).
std::vector<double> distance_inputs(std::span<const double> y, std::span<const double> x,
                                    std::size_t rows, std::size_t s);

/// Maps raw coordinates to [-1, 1] per axis (axis offset selects t for temporal 1D).
double normalize_coord(const ModelSpec& spec, std::size_t axis, double v);

/// Trunk inputs for raw query points [M x cols] of sample `sensor_coords`.
Tensor trunk_input(const ModelSpec& spec, std::span<const double> queries, std::size_t m,
                   std::span<const float> sensor_coords);

/// Temporal forward in normalized units for n samples sharing one query set:
/// [(T+ * n) x M].
Tensor forward_temporal(const ModelSpec& spec, const ModelParams& params,
                        const PreparedBatch& batch, const Tensor& trunk_in);

/// Spacetime forward in normalized units; query rows belong to `owner` samples.
Tensor forward_spacetime(const ModelSpec& spec, const ModelParams& params,
                         const PreparedBatch& batch, const Tensor& trunk_in,
                         std::span<const std::size_t> owner);

/// Physical-unit prediction for one sample at raw query points [M x cols].
/// Returns [T+ x M] (temporal) or [M] (spacetime).
std::vector<double> predict(const ModelSpec& spec, const ModelParams& params,
                            const SampleView& sample, std::span<const double> queries,
                            std::size_t m);

/// Predictions at the sample's own stored query points.
std::vector<double> predict_sample(const ModelSpec& spec, const ModelParams& params,
                                   const Dataset& dataset, std::size_t index);

SampleView sample_view(const Dataset& dataset, std::size_t index);

/// Reference scalar evaluation of one query for latent vectors b, s, t.
double sropnet_eval(std::span<const double> b, std::span<const double> s,
                    std::span<const double> t, double bias);

/// Checks that the model can consume the dataset; throws ConfigError otherwise.
void check_compatible(const ModelSpec& spec, const DatasetHeader& header);

// ---------------------------------------------------------------------------
// Checkpoints (SROPCKPT1)

struct Checkpoint {
  ModelSpec spec;
  ModelParams params;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace srop
