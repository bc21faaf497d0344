#pragma once

// Data and physics losses, the mini-batch training loop and evaluation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "srop/dataset.hpp"
#include "srop/model.hpp"
#include "srop/pde.hpp"
#include "srop/tensor.hpp"

namespace srop {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double lambda_data = 1.0;
  double lambda_physics = 0.0;
  std::size_t n_collocation = 64;
  double fd_step = 1e-3;
  double validation_fraction = 0.125;
  /// Random query subset per sample and batch for spacetime data (0 = all).
  std::size_t queries_per_sample = 0;

  void validate() const;
};

nlohmann::ordered_json train_config_to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

// ---------------------------------------------------------------------------
// Losses

/// Sample indices plus, for spacetime data, the query rows used per sample.
struct Batch {
  std::vector<std::size_t> samples;
  /// Empty means every query point of every sample.
  std::vector<std::vector<std::size_t>> queries;
};

/// Mean squared error (in the model's normalized units) over every
/// (sample, query point[, frame]) pair of the batch.
Tensor data_loss(const ModelSpec& spec, const ModelParams& params, const Dataset& dataset,
                 const Batch& batch);

/// Sum of squared errors and the number of terms, without a graph.
std::pair<double, std::size_t> data_sse(const ModelSpec& spec, const ModelParams& params,
                                        const Dataset& dataset, const Batch& batch);

/// A differentiable field u(points): points [P x (d + 1)] in physical
/// coordinates (space then t), returns [P] in physical units.
using PointModel = std::function<Tensor(std::span<const double> points, std::size_t count)>;

/// Wraps one dataset sample as a point model. Temporal models interpolate
/// linearly between output frames in time.
PointModel make_point_model(const ModelSpec& spec, const ModelParams& params,
                            const Dataset& dataset, std::size_t sample);

struct PhysicsProblem {
  std::size_t d = 1;
  double D = 1.0;
  ForcingSpec forcing;
  std::vector<double> coord_min;
  std::vector<double> coord_max;
};

/// Heat-equation residual R = D_t u - D lap u - F at each collocation point,
/// with central stencils of step h on model evaluations. Returns [P].
Tensor physics_residual_values(const PointModel& model, const PhysicsProblem& problem,
                               std::span<const double> collocation, std::size_t count, double h);

/// Mean of the squared residual.
Tensor physics_residual(const PointModel& model, const PhysicsProblem& problem,
                        std::span<const double> collocation, std::size_t count, double h);

/// count points uniform in the box shrunk by 2h on every side.
std::vector<double> sample_collocation(Rng& rng, const PhysicsProblem& problem,
                                       std::size_t count, double h);

PhysicsProblem physics_problem(const Dataset& dataset, std::size_t sample);

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelSpec spec;
  /// Parameters of the best-validation epoch, float32-rounded.
  ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Global normalization statistics (target mean and standard deviation).
void fit_normalization(ModelSpec& spec, const Dataset& dataset,
                       std::span<const std::size_t> indices);

/// Splits indices deterministically; a dataset too small to split validates
/// on its training samples.
void split_indices(std::size_t n, double validation_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& val);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(ModelSpec spec, ModelParams params, const Dataset& dataset,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

std::string loss_history_csv(const std::vector<EpochRecord>& history);

// ---------------------------------------------------------------------------
// Evaluation

struct Aggregate {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct EvalReport {
  std::vector<double> rel_l2;
  std::vector<double> mse;
  std::string baseline_method;
  std::vector<double> baseline_rel_l2;
  Aggregate model;
  Aggregate baseline;
  double wall_seconds = 0.0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

/// Per-sample predictions at the stored query points, flattened like hr_targets.
using Predictor = std::function<std::vector<double>(std::size_t sample)>;

double relative_l2(std::span<const double> prediction, std::span<const float> truth);
Aggregate aggregate(std::span<const double> values);

/// baseline: "" (none), "bicubic_grid" or "idw_scattered".
EvalReport evaluate(const Predictor& predictor, const Dataset& dataset,
                    const std::string& baseline = "");
EvalReport evaluate(const ModelSpec& spec, const ModelParams& params, const Dataset& dataset,
                    const std::string& baseline = "");

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::ordered_json& j);

}  // namespace srop
