#include "srop/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "srop/adam.hpp"
#include "srop/baselines.hpp"
#include "srop/errors.hpp"

namespace srop {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(lambda_data >= 0.0) || !(lambda_physics >= 0.0)) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (!(lambda_data + lambda_physics > 0.0)) {
    throw ConfigError("lambda_data + lambda_physics must be positive");
  }
  if (!(fd_step > 0.0)) throw ConfigError("fd_step must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  if (lambda_physics > 0.0 && n_collocation == 0) {
    throw ConfigError("n_collocation must be positive when the physics loss is on");
  }
}

ordered_json train_config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed;
  j["lambda_data"] = c.lambda_data;
  j["lambda_physics"] = c.lambda_physics;
  j["n_collocation"] = c.n_collocation;
  j["fd_step"] = c.fd_step;
  j["validation_fraction"] = c.validation_fraction;
  j["queries_per_sample"] = c.queries_per_sample;
  return j;
}

TrainConfig train_config_from_json(const ordered_json& j) {
  static const std::set<std::string> known{
      "epochs",        "batch_size",     "learning_rate", "beta1",
      "beta2",         "epsilon",        "seed",          "lambda_data",
      "lambda_physics", "n_collocation", "fd_step",       "validation_fraction",
      "queries_per_sample"};
  if (!j.is_object()) throw ConfigError("train section must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in train section");
  }
  TrainConfig c;
  try {
    auto get = [&](const char* key, auto& out) {
      if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("learning_rate", c.learning_rate);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("epsilon", c.epsilon);
    get("seed", c.seed);
    get("lambda_data", c.lambda_data);
    get("lambda_physics", c.lambda_physics);
    get("n_collocation", c.n_collocation);
    get("fd_step", c.fd_step);
    get("validation_fraction", c.validation_fraction);
    get("queries_per_sample", c.queries_per_sample);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train section: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Data loss

namespace {

double value_shift(const ModelSpec& spec) {
  return spec.normalization == Normalization::global ? spec.value_shift : 0.0;
}

std::vector<double> as_double(std::span<const float> v) {
  return std::vector<double>(v.begin(), v.end());
}

bool same_values(std::span<const float> a, std::span<const float> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

struct Terms {
  Tensor prediction;
  Tensor target;
};

Terms temporal_terms(const ModelSpec& spec, const ModelParams& params, const Dataset& ds,
                     std::span<const std::size_t> samples) {
  const std::size_t m = ds.header.hr_query_count;
  const std::size_t frames = spec.T_out;
  const auto& first = ds.samples[samples[0]];
  bool shared = true;
  for (auto i : samples) {
    const auto& r = ds.samples[i];
    if (!same_values(r.query_coords, first.query_coords) ||
        (spec.variant == Variant::distance && !same_values(r.sensor_coords, first.sensor_coords))) {
      shared = false;
      break;
    }
  }
  const double shift = value_shift(spec);
  auto targets_for = [&](std::span<const std::size_t> group, const PreparedBatch& batch) {
    const std::size_t n = group.size();
    std::vector<double> t(frames * n * m);
    for (std::size_t b = 0; b < n; ++b) {
      const auto& hr = ds.samples[group[b]].hr_targets;
      const double sc = batch.scales[b];
      for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t q = 0; q < m; ++q) {
          t[(i * n + b) * m + q] = (hr[i * m + q] - shift) / sc;
        }
      }
    }
    return Tensor({frames * n, m}, std::move(t));
  };
  auto run = [&](std::span<const std::size_t> group) {
    std::vector<SampleView> views;
    for (auto i : group) views.push_back(sample_view(ds, i));
    const PreparedBatch batch = prepare_batch(spec, views);
    const auto& r0 = ds.samples[group[0]];
    const Tensor y = trunk_input(spec, as_double(r0.query_coords), m, r0.sensor_coords);
    return Terms{forward_temporal(spec, params, batch, y), targets_for(group, batch)};
  };
  if (shared) return run(samples);
  std::vector<Tensor> preds, targets;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    auto t = run(samples.subspan(k, 1));
    preds.push_back(t.prediction);
    targets.push_back(t.target);
  }
  return Terms{concat_rows(preds), concat_rows(targets)};
}

Terms spacetime_terms(const ModelSpec& spec, const ModelParams& params, const Dataset& ds,
                      const Batch& batch) {
  const std::size_t m = ds.header.hr_query_count;
  const std::size_t cols = ds.header.query_cols();
  const std::size_t n = batch.samples.size();
  std::vector<SampleView> views;
  for (auto i : batch.samples) views.push_back(sample_view(ds, i));
  const PreparedBatch prepared = prepare_batch(spec, views);
  const double shift = value_shift(spec);

  std::vector<Tensor> trunk_parts;
  std::vector<std::size_t> owner;
  std::vector<double> target;
  for (std::size_t b = 0; b < n; ++b) {
    const auto& r = ds.samples[batch.samples[b]];
    std::vector<std::size_t> rows;
    if (batch.queries.empty() || batch.queries[b].empty()) {
      rows.resize(m);
      std::iota(rows.begin(), rows.end(), 0);
    } else {
      rows = batch.queries[b];
    }
    std::vector<double> q;
    q.reserve(rows.size() * cols);
    for (auto k : rows) {
      for (std::size_t a = 0; a < cols; ++a) q.push_back(r.query_coords[k * cols + a]);
      target.push_back((r.hr_targets[k] - shift) / prepared.scales[b]);
      owner.push_back(b);
    }
    trunk_parts.push_back(trunk_input(spec, q, rows.size(), r.sensor_coords));
  }
  const Tensor y = trunk_parts.size() == 1 ? trunk_parts[0] : concat_rows(trunk_parts);
  Tensor pred = forward_spacetime(spec, params, prepared, y, owner);
  const std::size_t count = target.size();
  return Terms{pred, Tensor({count}, std::move(target))};
}

Terms batch_terms(const ModelSpec& spec, const ModelParams& params, const Dataset& ds,
                  const Batch& batch) {
  if (batch.samples.empty()) throw ContractError("data_loss: empty batch");
  if (spec.layout == Layout::temporal) return temporal_terms(spec, params, ds, batch.samples);
  return spacetime_terms(spec, params, ds, batch);
}

}  // namespace

Tensor data_loss(const ModelSpec& spec, const ModelParams& params, const Dataset& dataset,
                 const Batch& batch) {
  const Terms t = batch_terms(spec, params, dataset, batch);
  return mse_loss(t.prediction, t.target);
}

std::pair<double, std::size_t> data_sse(const ModelSpec& spec, const ModelParams& params,
                                        const Dataset& dataset, const Batch& batch) {
  NoGradGuard guard;
  const Terms t = batch_terms(spec, params, dataset, batch);
  double sse = 0.0;
  auto p = t.prediction.values();
  auto y = t.target.values();
  for (std::size_t i = 0; i < p.size(); ++i) sse += (p[i] - y[i]) * (p[i] - y[i]);
  return {sse, p.size()};
}

// ---------------------------------------------------------------------------
// Physics residual

PointModel make_point_model(const ModelSpec& spec, const ModelParams& params,
                            const Dataset& dataset, std::size_t sample) {
  const Dataset* ds = &dataset;
  return [spec, params, ds, sample](std::span<const double> points, std::size_t count) {
    const std::size_t d = spec.d;
    const SampleView view = sample_view(*ds, sample);
    const PreparedBatch batch = prepare_batch(spec, std::span<const SampleView>(&view, 1));
    const double sc = batch.scales[0];
    const double shift = value_shift(spec);
    if (points.size() != count * (d + 1)) {
      throw DimensionError("point model: expected " + std::to_string(count * (d + 1)) +
                           " coordinates, got " + std::to_string(points.size()));
    }
    Tensor out;
    if (spec.layout == Layout::spacetime) {
      const Tensor y = trunk_input(spec, points, count, view.sensor_coords);
      const std::vector<std::size_t> owner(count, 0);
      out = forward_spacetime(spec, params, batch, y, owner);
    } else {
      std::vector<double> q(count * d);
      const std::size_t F = spec.T_out;
      std::vector<double> w(count * F, 0.0);
      const double t0 = spec.coord_min[d], t1 = spec.coord_max[d];
      for (std::size_t p = 0; p < count; ++p) {
        for (std::size_t a = 0; a < d; ++a) q[p * d + a] = points[p * (d + 1) + a];
        if (F == 1) {
          w[p] = 1.0;
          continue;
        }
        const double pos = std::clamp((points[p * (d + 1) + d] - t0) / (t1 - t0), 0.0, 1.0) *
                           static_cast<double>(F - 1);
        std::size_t j = static_cast<std::size_t>(std::floor(pos));
        if (j > F - 2) j = F - 2;
        const double frac = pos - static_cast<double>(j);
        w[p * F + j] = 1.0 - frac;
        w[p * F + j + 1] = frac;
      }
      const Tensor y = trunk_input(spec, q, count, view.sensor_coords);
      const Tensor frames = forward_temporal(spec, params, batch, y);  // [F x count]
      out = row_sum(transpose(frames) * Tensor({count, F}, std::move(w)));
    }
    return add_scalar(scale(out, sc), shift);
  };
}

Tensor physics_residual_values(const PointModel& model, const PhysicsProblem& problem,
                               std::span<const double> collocation, std::size_t count,
                               double h) {
  const std::size_t d = problem.d;
  const std::size_t dim = d + 1;
  if (!(h > 0.0)) throw ConfigError("physics residual: stencil step must be positive");
  if (collocation.size() != count * dim) {
    throw DimensionError("physics residual: expected " + std::to_string(count * dim) +
                         " coordinates, got " + std::to_string(collocation.size()));
  }
  if (count == 0) throw ContractError("physics residual: no collocation points");
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t a = 0; a < dim; ++a) {
      const double v = collocation[p * dim + a];
      if (!(v - h > problem.coord_min[a] && v + h < problem.coord_max[a])) {
        throw ContractError("collocation point " + std::to_string(p) + " lies within h = " +
                            std::to_string(h) + " of the boundary on axis " + std::to_string(a));
      }
    }
  }
  // Stencil order per point: centre, t + h, t - h, then x_a + h, x_a - h per axis.
  const std::size_t S = 3 + 2 * d;
  std::vector<double> pts(count * S * dim);
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t k = 0; k < S; ++k) {
      double* row = pts.data() + (p * S + k) * dim;
      std::copy_n(collocation.data() + p * dim, dim, row);
      if (k == 1) row[d] += h;
      if (k == 2) row[d] -= h;
      if (k >= 3) {
        const std::size_t axis = (k - 3) / 2;
        row[axis] += (k - 3) % 2 == 0 ? h : -h;
      }
    }
  }
  const double inv_h2 = 1.0 / (h * h);
  std::vector<double> w(S, 0.0);
  w[0] = 2.0 * problem.D * static_cast<double>(d) * inv_h2;
  w[1] = 0.5 / h;
  w[2] = -0.5 / h;
  for (std::size_t k = 3; k < S; ++k) w[k] = -problem.D * inv_h2;

  std::vector<double> forcing(count);
  for (std::size_t p = 0; p < count; ++p) {
    forcing[p] = forcing_eval(problem.forcing, problem.D,
                              collocation.subspan(p * dim, d), collocation[p * dim + d]);
  }
  const Tensor u = model(pts, count * S);
  if (u.numel() != count * S) {
    throw DimensionError("physics residual: the model returned " + std::to_string(u.numel()) +
                         " values for " + std::to_string(count * S) + " points");
  }
  const Tensor combo = matmul(reshape(u, {count, S}), Tensor({S, 1}, std::move(w)));
  return reshape(combo, {count}) - Tensor({count}, std::move(forcing));
}

Tensor physics_residual(const PointModel& model, const PhysicsProblem& problem,
                        std::span<const double> collocation, std::size_t count, double h) {
  return mean(square(physics_residual_values(model, problem, collocation, count, h)));
}

std::vector<double> sample_collocation(Rng& rng, const PhysicsProblem& problem,
                                       std::size_t count, double h) {
  const std::size_t dim = problem.d + 1;
  std::vector<double> pts(count * dim);
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t a = 0; a < dim; ++a) {
      const double lo = problem.coord_min[a] + 2.0 * h;
      const double hi = problem.coord_max[a] - 2.0 * h;
      if (!(hi > lo)) throw ConfigError("fd_step is too large for the domain");
      pts[p * dim + a] = rng.uniform(lo, hi);
    }
  }
  return pts;
}

PhysicsProblem physics_problem(const Dataset& ds, std::size_t sample) {
  PhysicsProblem p;
  p.d = ds.header.d;
  p.D = sample_diffusion(ds, sample);
  p.forcing = sample_forcing(ds, sample);
  p.coord_min = ds.header.coord_min;
  p.coord_max = ds.header.coord_max;
  return p;
}

// ---------------------------------------------------------------------------
// Training

void fit_normalization(ModelSpec& spec, const Dataset& ds, std::span<const std::size_t> indices) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (auto i : indices) {
    for (float v : ds.samples.at(i).hr_targets) {
      sum += v;
      sq += static_cast<double>(v) * v;
      ++n;
    }
  }
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  const double sd = std::sqrt(var);
  spec.value_shift = static_cast<float>(mean);
  spec.value_scale = sd > 1e-12 ? static_cast<double>(static_cast<float>(sd)) : 1.0;
}

void split_indices(std::size_t n, double validation_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, 0x5b117ull);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(perm[i - 1], perm[j]);
  }
  const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val >= n) {
    train = perm;
    val = perm;
  } else {
    val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
}

namespace {

std::vector<std::size_t> query_subset(Rng& rng, std::size_t m, std::size_t k) {
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(m - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double param_norm(const ModelParams& params) {
  double s = 0.0;
  for (const auto& [name, t] : params.entries()) {
    for (double v : t.values()) s += v * v;
  }
  return std::sqrt(s);
}

}  // namespace

TrainResult train(ModelSpec spec, ModelParams params, const Dataset& ds, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  check_compatible(spec, ds.header);
  if (ds.samples.empty()) throw ConfigError("cannot train on an empty dataset");
  if (params.count() != expected_param_count(spec)) {
    throw ConfigError("parameter count does not match the model spec");
  }

  params = params.clone();
  TrainResult result;
  split_indices(ds.samples.size(), config.validation_fraction, config.seed, result.train_indices,
                result.val_indices);
  if (spec.normalization == Normalization::global) {
    fit_normalization(spec, ds, result.train_indices);
  }
  result.spec = spec;

  std::vector<Tensor> tensors = params.tensors();
  for (auto& t : tensors) t.set_requires_grad(true);
  AdamState adam = make_adam_state(
      tensors, {config.learning_rate, config.beta1, config.beta2, config.epsilon});

  const std::size_t m = ds.header.hr_query_count;
  const bool subsample = ds.header.layout == Layout::spacetime && config.queries_per_sample > 0 &&
                         config.queries_per_sample < m;
  const Rng root(config.seed, 0x7a41ull);

  // Fixed validation batches.
  std::vector<Batch> val_batches;
  {
    Rng vrng = root.substream(0);
    for (std::size_t i = 0; i < result.val_indices.size(); i += config.batch_size) {
      Batch b;
      const std::size_t end = std::min(result.val_indices.size(), i + config.batch_size);
      b.samples.assign(result.val_indices.begin() + static_cast<std::ptrdiff_t>(i),
                       result.val_indices.begin() + static_cast<std::ptrdiff_t>(end));
      if (subsample) {
        for (std::size_t k = 0; k < b.samples.size(); ++k) {
          b.queries.push_back(query_subset(vrng, m, config.queries_per_sample));
        }
      }
      val_batches.push_back(std::move(b));
    }
  }

  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng erng = root.substream(epoch);
    std::vector<std::size_t> order = result.train_indices;
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j =
          static_cast<std::size_t>(erng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::size_t batch_no = 0;
    for (std::size_t i = 0; i < order.size(); i += config.batch_size, ++batch_no) {
      Batch b;
      const std::size_t end = std::min(order.size(), i + config.batch_size);
      b.samples.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(end));
      if (subsample) {
        for (std::size_t k = 0; k < b.samples.size(); ++k) {
          b.queries.push_back(query_subset(erng, m, config.queries_per_sample));
        }
      }
      Tensor loss;
      if (config.lambda_data > 0.0) loss = scale(data_loss(spec, params, ds, b), config.lambda_data);
      if (config.lambda_physics > 0.0) {
        Tensor phys;
        for (auto idx : b.samples) {
          const PhysicsProblem problem = physics_problem(ds, idx);
          const auto pts = sample_collocation(erng, problem, config.n_collocation, config.fd_step);
          const Tensor r = physics_residual(make_point_model(spec, params, ds, idx), problem, pts,
                                            config.n_collocation, config.fd_step);
          phys = phys.defined() ? phys + r : r;
        }
        phys = scale(phys, config.lambda_physics / static_cast<double>(b.samples.size()));
        loss = loss.defined() ? loss + phys : phys;
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << batch_no
            << " (parameter norm " << param_norm(params) << ")";
        throw NumericalError(msg.str());
      }
      backward(loss);
      adam_step(tensors, adam);
      loss_sum += value * static_cast<double>(b.samples.size());
      loss_count += b.samples.size();
    }

    double sse = 0.0;
    std::size_t terms = 0;
    for (const auto& vb : val_batches) {
      const auto [s, n] = data_sse(spec, params, ds, vb);
      sse += s;
      terms += n;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(loss_count),
                    sse / static_cast<double>(terms)};
    if (!std::isfinite(rec.val_loss)) {
      std::ostringstream msg;
      msg << "non-finite validation loss at epoch " << epoch << " (parameter norm "
          << param_norm(params) << ")";
      throw NumericalError(msg.str());
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!have_best || rec.val_loss < result.best_val_loss) {
      have_best = true;
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      result.params = params.clone();
      result.params.round_to_float();
    }
  }
  if (!have_best) {
    result.params = params.clone();
    result.params.round_to_float();
  }
  return result;
}

std::string loss_history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

double relative_l2(std::span<const double> prediction, std::span<const float> truth) {
  if (prediction.size() != truth.size()) {
    throw DimensionError("relative_l2: " + std::to_string(prediction.size()) +
                         " predictions for " + std::to_string(truth.size()) + " targets");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = prediction[i] - truth[i];
    num += e * e;
    den += static_cast<double>(truth[i]) * truth[i];
  }
  if (!(den > 0.0)) throw ContractError("relative_l2: the reference field is identically zero");
  return std::sqrt(num / den);
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  if (values.empty()) return a;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  a.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  const std::size_t n = v.size();
  a.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  a.max = v.back();
  return a;
}

EvalReport evaluate(const Predictor& predictor, const Dataset& ds, const std::string& baseline) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  std::optional<BaselineMethod> method;
  if (!baseline.empty()) {
    method = baseline_method_from_string(baseline);
    report.baseline_method = baseline;
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& truth = ds.samples[i].hr_targets;
    const auto pred = predictor(i);
    report.rel_l2.push_back(relative_l2(pred, truth));
    double se = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) se += (pred[k] - truth[k]) * (pred[k] - truth[k]);
    report.mse.push_back(se / static_cast<double>(truth.size()));
    if (method) {
      report.baseline_rel_l2.push_back(
          relative_l2(baseline_interpolate(ds.header, ds.samples[i], *method), truth));
    }
  }
  report.model = aggregate(report.rel_l2);
  report.baseline = aggregate(report.baseline_rel_l2);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

EvalReport evaluate(const ModelSpec& spec, const ModelParams& params, const Dataset& dataset,
                    const std::string& baseline) {
  check_compatible(spec, dataset.header);
  return evaluate([&](std::size_t i) { return predict_sample(spec, params, dataset, i); }, dataset,
                  baseline);
}

namespace {

ordered_json aggregate_json(const Aggregate& a) {
  return {{"mean", a.mean}, {"median", a.median}, {"max", a.max}};
}

Aggregate aggregate_from(const ordered_json& j) {
  return {j.at("mean").get<double>(), j.at("median").get<double>(), j.at("max").get<double>()};
}

}  // namespace

ordered_json report_to_json(const EvalReport& r) {
  ordered_json j;
  j["n_samples"] = r.rel_l2.size();
  j["model"] = aggregate_json(r.model);
  j["per_sample"] = {{"rel_l2", r.rel_l2}, {"mse", r.mse}};
  if (!r.baseline_method.empty()) {
    ordered_json b = aggregate_json(r.baseline);
    b["method"] = r.baseline_method;
    b["rel_l2"] = r.baseline_rel_l2;
    j["baseline"] = b;
  }
  j["wall_seconds"] = r.wall_seconds;
  j["config"] = r.config;
  return j;
}

EvalReport report_from_json(const ordered_json& j) {
  EvalReport r;
  try {
    r.model = aggregate_from(j.at("model"));
    r.rel_l2 = j.at("per_sample").at("rel_l2").get<std::vector<double>>();
    r.mse = j.at("per_sample").at("mse").get<std::vector<double>>();
    if (j.contains("baseline")) {
      const auto& b = j.at("baseline");
      r.baseline = aggregate_from(b);
      r.baseline_method = b.at("method").get<std::string>();
      r.baseline_rel_l2 = b.at("rel_l2").get<std::vector<double>>();
    }
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.config = j.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad evaluation report: ") + e.what());
  }
  return r;
}

}  // namespace srop
