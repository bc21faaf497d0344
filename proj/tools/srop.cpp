// srop: dataset generation, training, evaluation, prediction and plotting.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "srop/baselines.hpp"
#include "srop/dataset.hpp"
#include "srop/errors.hpp"
#include "srop/fields.hpp"
#include "srop/model.hpp"
#include "srop/run_config.hpp"
#include "srop/training.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace srop;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumerical = 4;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed to write '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string range_str(const Dataset& ds, std::size_t p) {
  if (ds.samples.empty()) return "-";
  double lo = ds.samples[0].params[p], hi = lo;
  for (const auto& r : ds.samples) {
    lo = std::min<double>(lo, r.params[p]);
    hi = std::max<double>(hi, r.params[p]);
  }
  std::ostringstream s;
  s << "[" << lo << ", " << hi << "]";
  return s.str();
}

void print_summary(const Dataset& ds, const fs::path& path) {
  const auto& h = ds.header;
  std::cout << "wrote " << path.string() << "\n"
            << "  family " << h.family << ", layout " << to_string(h.layout) << ", "
            << h.n_samples << " samples\n  LR shape [";
  for (std::size_t i = 0; i < h.lr_shape.size(); ++i) {
    std::cout << (i ? " x " : "") << h.lr_shape[i];
  }
  std::cout << "], HR " << h.hr_frames << " frame(s) x " << h.hr_query_count
            << " query points, sensors " << h.s << "\n";
  for (std::size_t p = 0; p < h.param_names.size(); ++p) {
    std::cout << "  " << h.param_names[p] << " in " << range_str(ds, p) << "\n";
  }
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string problem;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string lr_mode = "coarse_solve";
  std::size_t hr_nx = 0, hr_nt = 0, space_factor = 0, time_factor = 0, lr_keep_frames = 0;
  std::size_t sensors = 0, sensor_frames = 0, queries = 0, query_frames = 0;
};

int cmd_generate(const GenerateArgs& a) {
  DatasetConfig c;
  c.problem = problem_from_string(a.problem);
  c.n_samples = a.n_samples;
  c.seed = a.seed;
  c.lr_mode = lr_mode_from_string(a.lr_mode);
  c.hr_nx = a.hr_nx;
  c.hr_nt = a.hr_nt;
  c.space_factor = a.space_factor;
  c.time_factor = a.time_factor;
  c.lr_keep_frames = a.lr_keep_frames;
  c.sensors = a.sensors;
  c.sensor_frames = a.sensor_frames;
  c.queries = a.queries;
  c.query_frames = a.query_frames;
  const Dataset ds = generate_dataset(c);
  write_dataset(ds, fs::path(a.out));
  print_summary(ds, a.out);
  return 0;
}

// --- train ------------------------------------------------------------------

int cmd_train(const std::string& dataset_path, const std::string& config_path,
              const std::string& out_dir) {
  RunConfig rc = load_run_config(config_path);
  rc.dataset_path = dataset_path;
  rc.out_dir = out_dir;
  const Dataset ds = read_dataset(fs::path(dataset_path));
  const ModelConfig mc =
      model_config_from_json(rc.model, default_model_config(ds.header.layout, ds.header.d));
  ModelSpec spec = make_model_spec(ds.header, mc);
  check_compatible(spec, ds.header);
  Rng rng(rc.train.seed, 0x1417ull);
  ModelParams params = init_params(spec, rng);

  ensure_dir(out_dir);
  ordered_json echo = run_config_to_json(rc);
  echo["model"] = model_config_to_json(mc);
  write_text(fs::path(out_dir) / "config.json", echo.dump(2) + "\n");

  std::cout << "training " << to_string(spec.variant) << " model (" << params.count()
            << " parameters) on " << ds.samples.size() << " samples\n";
  const auto start = std::chrono::steady_clock::now();
  const TrainResult res = train(spec, params, ds, rc.train, [](const EpochRecord& r) {
    std::printf("epoch %4zu  train %.6e  val %.6e\n", r.epoch, r.train_loss, r.val_loss);
    std::fflush(stdout);
  });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Checkpoint ckpt{res.spec, res.params, ordered_json::object()};
  ckpt.extra["best_epoch"] = res.best_epoch;
  ckpt.extra["best_val_loss"] = res.best_val_loss;
  ckpt.extra["dataset_family"] = ds.header.family;
  save_checkpoint(ckpt, fs::path(out_dir) / "checkpoint.ckpt");
  write_text(fs::path(out_dir) / "loss.csv", loss_history_csv(res.history));
  ordered_json summary;
  summary["best_epoch"] = res.best_epoch;
  summary["best_val_loss"] = res.best_val_loss;
  summary["wall_seconds"] = secs;
  summary["parameter_count"] = res.params.count();
  summary["parameter_checksum"] = param_checksum(res.params);
  summary["train_samples"] = res.train_indices.size();
  summary["val_samples"] = res.val_indices.size();
  write_text(fs::path(out_dir) / "train_summary.json", summary.dump(2) + "\n");
  std::cout << "best epoch " << res.best_epoch << " (val " << res.best_val_loss << "), "
            << secs << " s; checkpoint in " << out_dir << "\n";
  return 0;
}

// --- evaluate ---------------------------------------------------------------

int cmd_evaluate(const std::string& ckpt_path, const std::string& dataset_path,
                 const std::string& report_path, std::string baseline) {
  const Checkpoint ckpt = load_checkpoint(fs::path(ckpt_path));
  const Dataset ds = read_dataset(fs::path(dataset_path));
  check_compatible(ckpt.spec, ds.header);
  if (baseline == "auto") {
    baseline = ds.header.layout == Layout::temporal ? "bicubic_grid" : "idw_scattered";
  } else if (baseline == "none") {
    baseline.clear();
  }
  EvalReport report = evaluate(ckpt.spec, ckpt.params, ds, baseline);
  report.config = {{"checkpoint", ckpt_path},
                   {"dataset", dataset_path},
                   {"baseline", baseline},
                   {"spec", spec_to_json(ckpt.spec)}};
  const fs::path rp(report_path);
  if (rp.has_parent_path()) ensure_dir(rp.parent_path());
  write_text(rp, report_to_json(report).dump(2) + "\n");
  std::cout << "mean relative L2 " << report.model.mean << " (median " << report.model.median
            << ", max " << report.model.max << ")";
  if (!baseline.empty()) std::cout << "; " << baseline << " mean " << report.baseline.mean;
  std::cout << "\n";
  return 0;
}

// --- predict ----------------------------------------------------------------

std::vector<std::size_t> parse_grid(const std::string& text, std::size_t d) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      const long v = std::stol(part);
      if (v < 1) throw ConfigError("grid sizes must be positive");
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ConfigError("bad --grid value '" + text + "'");
    }
  }
  if (dims.size() != d + 1) {
    throw ConfigError("--grid needs " + std::to_string(d + 1) + " sizes (space then time)");
  }
  return dims;
}

std::vector<double> axis(double lo, double hi, std::size_t n) {
  if (n == 1) return {lo};
  return uniform_grid(lo, hi, n);
}

int cmd_predict(const std::string& ckpt_path, const std::string& dataset_path,
                std::size_t index, const std::string& grid, const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(fs::path(ckpt_path));
  const Dataset ds = read_dataset(fs::path(dataset_path));
  check_compatible(ckpt.spec, ds.header);
  if (index >= ds.samples.size()) {
    throw ConfigError("sample " + std::to_string(index) + " out of range (dataset has " +
                      std::to_string(ds.samples.size()) + ")");
  }
  const auto& spec = ckpt.spec;
  const std::size_t d = spec.d;
  const auto dims = parse_grid(grid, d);
  const std::size_t nt = dims[d];
  std::vector<std::vector<double>> axes;
  for (std::size_t a = 0; a < d; ++a) {
    axes.push_back(axis(spec.coord_min[a], spec.coord_max[a], dims[a]));
  }
  const auto times = axis(spec.coord_min[d], spec.coord_max[d], nt);
  std::vector<double> spatial;
  std::size_t m = 1;
  for (std::size_t a = 0; a < d; ++a) m *= dims[a];
  if (d == 1) {
    spatial = axes[0];
  } else {
    for (double x1 : axes[0]) {
      for (double x2 : axes[1]) {
        spatial.push_back(x1);
        spatial.push_back(x2);
      }
    }
  }

  const SampleView view = sample_view(ds, index);
  std::vector<double> values(nt * m);
  if (spec.layout == Layout::spacetime) {
    std::vector<double> pts;
    pts.reserve(nt * m * (d + 1));
    for (double t : times) {
      for (std::size_t q = 0; q < m; ++q) {
        for (std::size_t a = 0; a < d; ++a) pts.push_back(spatial[q * d + a]);
        pts.push_back(t);
      }
    }
    values = predict(spec, ckpt.params, view, pts, nt * m);
  } else {
    const auto frames = predict(spec, ckpt.params, view, spatial, m);
    const std::size_t F = spec.T_out;
    const double t0 = spec.coord_min[d], t1 = spec.coord_max[d];
    for (std::size_t i = 0; i < nt; ++i) {
      double pos = F < 2 ? 0.0 : (times[i] - t0) / (t1 - t0) * static_cast<double>(F - 1);
      std::size_t j = static_cast<std::size_t>(std::floor(pos));
      if (F >= 2 && j > F - 2) j = F - 2;
      const double w = F < 2 ? 0.0 : pos - static_cast<double>(j);
      for (std::size_t q = 0; q < m; ++q) {
        const double a = frames[j * m + q];
        const double b = F < 2 ? a : frames[(j + 1) * m + q];
        values[i * m + q] = (1.0 - w) * a + w * b;
      }
    }
  }

  ensure_dir(out_dir);
  std::vector<std::size_t> shape{nt};
  for (std::size_t a = 0; a < d; ++a) shape.push_back(dims[a]);
  ordered_json meta = {{"checkpoint", ckpt_path},
                       {"dataset", dataset_path},
                       {"sample", index},
                       {"grid", grid},
                       {"coord_min", spec.coord_min},
                       {"coord_max", spec.coord_max}};
  Field pred{"prediction", shape, std::vector<float>(values.begin(), values.end()), meta};
  write_field(pred, fs::path(out_dir) / "prediction.field");

  const auto& h = ds.header;
  const auto& rec = ds.samples[index];
  if (h.layout == Layout::temporal) {
    Field lr{"lr", h.lr_shape, rec.lr_field, meta};
    write_field(lr, fs::path(out_dir) / "lr.field");
    if (nt == h.hr_frames && m == h.hr_query_count) {
      Field truth{"truth", shape, rec.hr_targets, meta};
      write_field(truth, fs::path(out_dir) / "truth.field");
    }
  } else if (h.family == "exp3") {
    const double alpha = ds.param(index, "alpha"), beta = ds.param(index, "beta");
    std::vector<float> exact(nt * m);
    for (std::size_t i = 0; i < nt; ++i) {
      for (std::size_t q = 0; q < m; ++q) {
        exact[i * m + q] =
            static_cast<float>(exact_solution_exp3(alpha, beta, spatial[q], times[i]));
      }
    }
    write_field(Field{"truth", shape, exact, meta}, fs::path(out_dir) / "truth.field");
  }
  std::cout << "wrote prediction [" << nt;
  for (std::size_t a = 0; a < d; ++a) std::cout << " x " << dims[a];
  std::cout << "] to " << out_dir << "\n";
  return 0;
}

// --- plot -------------------------------------------------------------------

int cmd_plot(const std::string& field_path, const std::string& truth_path,
             const std::string& lr_path, const std::string& out_dir) {
  ensure_dir(out_dir);
  const Field pred = read_field(fs::path(field_path));
  ordered_json index;
  auto record = [&](const std::string& key, const PlotResult& r) {
    index[key] = {{"sidecar", r.sidecar.filename().string()},
                  {"images", r.images.size()},
                  {"min", r.min},
                  {"max", r.max}};
  };
  record("prediction", plot_field(pred, out_dir, "prediction"));
  if (!lr_path.empty()) record("lr", plot_field(read_field(fs::path(lr_path)), out_dir, "lr"));
  if (!truth_path.empty()) {
    const Field truth = read_field(fs::path(truth_path));
    record("truth", plot_field(truth, out_dir, "truth"));
    record("error", plot_field(error_field(pred, truth), out_dir, "error", true));
  }
  write_text(fs::path(out_dir) / "panels.json", index.dump(2) + "\n");
  std::cout << "wrote panels to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Super-resolution operator networks for forced diffusion problems"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate an SROP1 dataset");
  g->add_option("--problem", gen.problem, "exp1|exp2|exp3|diff2d|diff2d-var|forced2d")
      ->required();
  g->add_option("--n-samples", gen.n_samples, "Number of samples")->required();
  g->add_option("--seed", gen.seed, "Random seed")->required();
  g->add_option("--out", gen.out, "Output file")->required();
  g->add_option("--lr-mode", gen.lr_mode, "coarse_solve|downsample");
  g->add_option("--hr-nx", gen.hr_nx, "HR spatial nodes per axis");
  g->add_option("--hr-nt", gen.hr_nt, "HR frames");
  g->add_option("--space-factor", gen.space_factor, "HR/LR spatial ratio");
  g->add_option("--time-factor", gen.time_factor, "HR/LR frame ratio");
  g->add_option("--lr-keep-frames", gen.lr_keep_frames, "Keep only the first N LR frames");
  g->add_option("--sensors", gen.sensors, "exp3 sensor count");
  g->add_option("--sensor-frames", gen.sensor_frames, "exp3 sensor frames");
  g->add_option("--queries", gen.queries, "exp3 query count");
  g->add_option("--query-frames", gen.query_frames, "exp3 query frames");

  std::string dataset, config, out, checkpoint, report, baseline = "auto", grid, field, truth, lr;
  std::size_t sample = 0;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--dataset", dataset, "SROP1 training data")->required();
  t->add_option("--config", config, "Run config JSON")->required();
  t->add_option("--out", out, "Run directory")->required();

  auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  e->add_option("--checkpoint", checkpoint)->required();
  e->add_option("--dataset", dataset)->required();
  e->add_option("--report", report)->required();
  e->add_option("--baseline", baseline, "auto|none|bicubic_grid|idw_scattered");

  auto* p = app.add_subcommand("predict", "Predict one sample on a chosen grid");
  p->add_option("--checkpoint", checkpoint)->required();
  p->add_option("--dataset", dataset)->required();
  p->add_option("--sample", sample)->required();
  p->add_option("--grid", grid, "NX[,NY],NT")->required();
  p->add_option("--out", out)->required();

  auto* pl = app.add_subcommand("plot", "Render field files as PGM and CSV");
  pl->add_option("--field", field)->required();
  pl->add_option("--truth", truth);
  pl->add_option("--lr", lr);
  pl->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_train(dataset, config, out);
    if (e->parsed()) return cmd_evaluate(checkpoint, dataset, report, baseline);
    if (p->parsed()) return cmd_predict(checkpoint, dataset, sample, grid, out);
    if (pl->parsed()) return cmd_plot(field, truth, lr, out);
  } catch (const ConfigError& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& err) {
    std::cerr << "data format error: " << err.what() << "\n";
    return kExitFormat;
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
