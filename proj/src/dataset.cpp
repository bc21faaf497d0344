#include "srop/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "srop/errors.hpp"

namespace srop {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Names

const char* to_string(Problem problem) {
  switch (problem) {
    case Problem::exp1: return "exp1";
    case Problem::exp2: return "exp2";
    case Problem::exp3: return "exp3";
    case Problem::diff2d: return "diff2d";
    case Problem::diff2d_var: return "diff2d-var";
    case Problem::forced2d: return "forced2d";
  }
  return "?";
}

Problem problem_from_string(const std::string& name) {
  for (auto p : {Problem::exp1, Problem::exp2, Problem::exp3, Problem::diff2d,
                 Problem::diff2d_var, Problem::forced2d}) {
    if (name == to_string(p)) return p;
  }
  throw ConfigError("unknown problem '" + name +
                    "' (expected exp1, exp2, exp3, diff2d, diff2d-var or forced2d)");
}

const char* to_string(Layout layout) {
  return layout == Layout::spacetime ? "spacetime" : "temporal";
}

Layout layout_from_string(const std::string& name) {
  if (name == "spacetime") return Layout::spacetime;
  if (name == "temporal") return Layout::temporal;
  throw ConfigError("unknown layout '" + name + "'");
}

const char* to_string(LrMode mode) {
  return mode == LrMode::coarse_solve ? "coarse_solve" : "downsample";
}

LrMode lr_mode_from_string(const std::string& name) {
  if (name == "coarse_solve") return LrMode::coarse_solve;
  if (name == "downsample") return LrMode::downsample;
  throw ConfigError("unknown lr mode '" + name + "'");
}

// ---------------------------------------------------------------------------
// Defaults

namespace {

bool is_2d(Problem p) {
  return p == Problem::diff2d || p == Problem::diff2d_var || p == Problem::forced2d;
}

template <typename T>
void set_default(T& field, T value) {
  if (field == T{}) field = value;
}

Domain1D domain_1d(Problem p) {
  Domain1D d;
  if (p == Problem::exp1) {
    d = {-1.0, 1.0, 0.0, 2.0, 1e-3};
  } else if (p == Problem::exp2) {
    d = {0.0, 2.0, 0.0, 1.0, 1.0 / 50.0};
  } else {
    d = {-1.0, 1.0, 0.0, 2.0, 1.0};
  }
  return d;
}

Domain2D domain_2d(Problem p) {
  Domain2D d;
  d.D = p == Problem::forced2d ? 0.1 : 0.15;
  return d;
}

std::vector<std::string> param_names_for(Problem p) {
  switch (p) {
    case Problem::exp1:
    case Problem::exp3: return {"alpha", "beta", "D"};
    case Problem::exp2:
    case Problem::diff2d:
    case Problem::diff2d_var: return {"D"};
    case Problem::forced2d:
      return {"D", "center_x1", "center_x2", "amplitude", "pitch", "r0", "half_width"};
  }
  return {};
}

std::vector<float> to_float(std::span<const double> v) {
  std::vector<float> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return static_cast<float>(x); });
  return out;
}

}  // namespace

DatasetConfig with_defaults(DatasetConfig c) {
  switch (c.problem) {
    case Problem::exp1:
      set_default<std::size_t>(c.hr_nx, 64);
      set_default<std::size_t>(c.hr_nt, 80);
      set_default<std::size_t>(c.space_factor, 4);
      set_default<std::size_t>(c.time_factor, 2);
      if (!c.alpha_range) c.alpha_range = Range{-6.0, 6.0};
      if (!c.beta_range) c.beta_range = Range{-1.0, 1.0};
      break;
    case Problem::exp2:
      set_default<std::size_t>(c.hr_nx, 96);
      set_default<std::size_t>(c.hr_nt, 100);
      set_default<std::size_t>(c.space_factor, 4);
      set_default<std::size_t>(c.time_factor, 2);
      break;
    case Problem::exp3:
      set_default<std::size_t>(c.sensors, 144);
      set_default<std::size_t>(c.sensor_frames, 12);
      set_default<std::size_t>(c.queries, 3600);
      set_default<std::size_t>(c.query_frames, 60);
      if (!c.alpha_range) c.alpha_range = Range{-8.0, 8.0};
      if (!c.beta_range) c.beta_range = Range{-1.0, 0.0};
      break;
    case Problem::diff2d:
      set_default<std::size_t>(c.hr_nx, 72);
      set_default<std::size_t>(c.hr_nt, 50);
      set_default<std::size_t>(c.space_factor, 3);
      set_default<std::size_t>(c.time_factor, 2);
      break;
    case Problem::diff2d_var:
      set_default<std::size_t>(c.hr_nx, 72);
      set_default<std::size_t>(c.hr_nt, 100);
      set_default<std::size_t>(c.space_factor, 3);
      set_default<std::size_t>(c.time_factor, 1);
      if (!c.diffusion_range) c.diffusion_range = Range{0.1, 0.4};
      break;
    case Problem::forced2d:
      set_default<std::size_t>(c.hr_nx, 72);
      set_default<std::size_t>(c.hr_nt, 30);
      set_default<std::size_t>(c.space_factor, 3);
      set_default<std::size_t>(c.time_factor, 1);
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Grid problems

std::vector<double> GridProblem::initial_state(std::size_t n) const {
  if (dims == 1) {
    const auto x = uniform_grid(domain1.x_min, domain1.x_max, n);
    switch (init) {
      case Init::zero: return std::vector<double>(n, 0.0);
      case Init::intervals: return rasterize_intervals(intervals, x);
      case Init::exp3_exact: {
        std::vector<double> u(n);
        for (std::size_t i = 0; i < n; ++i) {
          u[i] = exact_solution_exp3(forcing.alpha, forcing.beta, x[i], domain1.t_min);
        }
        return u;
      }
      case Init::disks: break;
    }
    throw ConfigError("disk initial states need a 2-D problem");
  }
  const auto x1 = uniform_grid(domain2.x1_min, domain2.x1_max, n);
  const auto x2 = uniform_grid(domain2.x2_min, domain2.x2_max, n);
  if (init == Init::zero) return std::vector<double>(n * n, 0.0);
  if (init == Init::disks) return rasterize_disks(disks, x1, x2);
  throw ConfigError("unsupported initial state for a 2-D problem");
}

std::vector<double> GridProblem::solve(std::size_t n, std::size_t nt) const {
  const auto u0 = initial_state(n);
  return dims == 1 ? solve_heat_1d(domain1, u0, forcing, n, nt)
                   : solve_heat_2d(domain2, u0, forcing, n, nt);
}

std::vector<double> make_lr(const GridProblem& problem, std::span<const double> hr_field,
                            std::span<const std::size_t> hr_shape, LrMode mode,
                            std::size_t time_factor, std::size_t space_factor) {
  if (hr_shape.size() != problem.dims + 1) {
    throw DimensionError("make_lr: HR shape rank does not match the problem dimension");
  }
  std::vector<std::size_t> factors(hr_shape.size(), space_factor);
  factors[0] = time_factor;
  if (mode == LrMode::downsample) return downsample(hr_field, hr_shape, factors);
  for (std::size_t a = 0; a < hr_shape.size(); ++a) {
    if (factors[a] == 0 || hr_shape[a] % factors[a] != 0) {
      throw ConfigError("make_lr: factor " + std::to_string(factors[a]) +
                        " does not divide resolution " + std::to_string(hr_shape[a]));
    }
  }
  return problem.solve(hr_shape[1] / space_factor, hr_shape[0] / time_factor);
}

// ---------------------------------------------------------------------------
// Generation

std::size_t worker_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SROP_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
  }
  return n;
}

namespace {

DatasetHeader make_header(const DatasetConfig& c) {
  DatasetHeader h;
  h.family = to_string(c.problem);
  h.n_samples = c.n_samples;
  h.param_names = param_names_for(c.problem);
  h.seed = c.seed;
  h.lr_mode = to_string(c.lr_mode);
  if (c.problem == Problem::exp3) {
    const auto dom = domain_1d(c.problem);
    h.layout = Layout::spacetime;
    h.d = 1;
    h.s = c.sensors;
    h.lr_shape = {c.sensors};
    h.hr_query_count = c.queries;
    h.hr_frames = 1;
    h.coord_min = {dom.x_min, dom.t_min};
    h.coord_max = {dom.x_max, dom.t_max};
    h.lr_t_max = dom.t_max;
    return h;
  }
  if (c.hr_nx % c.space_factor != 0 || c.hr_nt % c.time_factor != 0) {
    throw ConfigError("HR resolution " + std::to_string(c.hr_nx) + "x" + std::to_string(c.hr_nt) +
                      " is not divisible by the factors");
  }
  const std::size_t lr_n = c.hr_nx / c.space_factor;
  const std::size_t lr_t = c.hr_nt / c.time_factor;
  const std::size_t keep = c.lr_keep_frames == 0 ? lr_t : c.lr_keep_frames;
  if (keep > lr_t || keep < 1) {
    throw ConfigError("lr_keep_frames must lie in [1, " + std::to_string(lr_t) + "]");
  }
  if (lr_n < 3 || lr_t < 2) throw ConfigError("low-resolution grid is too coarse");
  h.layout = Layout::temporal;
  h.hr_frames = c.hr_nt;
  if (is_2d(c.problem)) {
    const auto dom = domain_2d(c.problem);
    h.d = 2;
    h.s = lr_n * lr_n;
    h.lr_shape = {keep, lr_n, lr_n};
    h.hr_query_count = c.hr_nx * c.hr_nx;
    h.coord_min = {dom.x1_min, dom.x2_min, dom.t_min};
    h.coord_max = {dom.x1_max, dom.x2_max, dom.t_max};
  } else {
    const auto dom = domain_1d(c.problem);
    h.d = 1;
    h.s = lr_n;
    h.lr_shape = {keep, lr_n};
    h.hr_query_count = c.hr_nx;
    h.coord_min = {dom.x_min, dom.t_min};
    h.coord_max = {dom.x_max, dom.t_max};
  }
  const double t0 = h.coord_min.back(), t1 = h.coord_max.back();
  h.lr_t_max = t0 + (t1 - t0) * static_cast<double>(keep - 1) / static_cast<double>(lr_t - 1);
  return h;
}

SampleRecord generate_exp3(const DatasetConfig& c, Rng rng) {
  const auto dom = domain_1d(Problem::exp3);
  auto prng = rng.substream(0);
  const double alpha = prng.uniform(c.alpha_range->first, c.alpha_range->second);
  const double beta = prng.uniform(c.beta_range->first, c.beta_range->second);
  auto srng = rng.substream(2);
  auto qrng = rng.substream(3);
  const auto sensors = sample_locations(srng, c.sensors, dom, c.sensor_frames);
  const auto queries = sample_locations(qrng, c.queries, dom, c.query_frames);

  SampleRecord r;
  r.params = to_float(std::vector<double>{alpha, beta, dom.D});
  r.sensor_coords.resize(2 * c.sensors);
  r.lr_field.resize(c.sensors);
  for (std::size_t j = 0; j < c.sensors; ++j) {
    const double x = sensors[2 * j], t = sensors[2 * j + 1];
    r.sensor_coords[j] = static_cast<float>(x);
    r.sensor_coords[c.sensors + j] = static_cast<float>(t);
    r.lr_field[j] = static_cast<float>(exact_solution_exp3(alpha, beta, x, t));
  }
  r.query_coords = to_float(queries);
  r.hr_targets.resize(c.queries);
  for (std::size_t q = 0; q < c.queries; ++q) {
    r.hr_targets[q] =
        static_cast<float>(exact_solution_exp3(alpha, beta, queries[2 * q], queries[2 * q + 1]));
  }
  return r;
}

SampleRecord generate_grid(const DatasetConfig& c, const DatasetHeader& h, Rng rng) {
  GridProblem prob;
  std::vector<double> params;
  auto prng = rng.substream(0);
  auto irng = rng.substream(1);
  switch (c.problem) {
    case Problem::exp1: {
      prob.dims = 1;
      prob.domain1 = domain_1d(c.problem);
      prob.forcing.family = ForcingFamily::exp1;
      prob.forcing.alpha = prng.uniform(c.alpha_range->first, c.alpha_range->second);
      prob.forcing.beta = prng.uniform(c.beta_range->first, c.beta_range->second);
      params = {prob.forcing.alpha, prob.forcing.beta, prob.domain1.D};
      break;
    }
    case Problem::exp2: {
      prob.dims = 1;
      prob.domain1 = domain_1d(c.problem);
      prob.forcing.family = ForcingFamily::exp2;
      prob.init = GridProblem::Init::intervals;
      prob.intervals = sample_intervals(irng, prob.domain1.x_min, prob.domain1.x_max);
      params = {prob.domain1.D};
      break;
    }
    case Problem::diff2d:
    case Problem::diff2d_var:
    case Problem::forced2d: {
      prob.dims = 2;
      prob.domain2 = domain_2d(c.problem);
      if (c.problem == Problem::diff2d_var) {
        prob.domain2.D = prng.uniform(c.diffusion_range->first, c.diffusion_range->second);
      }
      prob.init = GridProblem::Init::disks;
      prob.disks = sample_disks(irng, prob.domain2);
      params = {prob.domain2.D};
      if (c.problem == Problem::forced2d) {
        auto frng = rng.substream(4);
        prob.forcing = spiral_forcing_2d(frng, prob.domain2);
        const auto& s = prob.forcing.spiral;
        params.insert(params.end(), {s.center_x1, s.center_x2, s.amplitude, s.pitch, s.r0,
                                     s.half_width});
      }
      break;
    }
    case Problem::exp3: break;
  }

  const std::size_t n = c.hr_nx;
  const auto hr = prob.solve(n, c.hr_nt);
  std::vector<std::size_t> hr_shape{c.hr_nt, n};
  if (prob.dims == 2) hr_shape.push_back(n);
  const auto lr = make_lr(prob, hr, hr_shape, c.lr_mode, c.time_factor, c.space_factor);
  const std::size_t lr_n = n / c.space_factor;

  SampleRecord r;
  r.params = to_float(params);
  r.lr_field = to_float(std::span(lr).first(h.lr_len()));
  r.hr_targets = to_float(hr);
  if (prob.dims == 1) {
    const auto xs = uniform_grid(prob.domain1.x_min, prob.domain1.x_max, lr_n);
    const auto xq = uniform_grid(prob.domain1.x_min, prob.domain1.x_max, n);
    r.sensor_coords = to_float(xs);
    r.query_coords = to_float(xq);
  } else {
    const auto& dm = prob.domain2;
    const auto s1 = uniform_grid(dm.x1_min, dm.x1_max, lr_n);
    const auto s2 = uniform_grid(dm.x2_min, dm.x2_max, lr_n);
    r.sensor_coords.resize(2 * lr_n * lr_n);
    for (std::size_t i = 0; i < lr_n; ++i) {
      for (std::size_t j = 0; j < lr_n; ++j) {
        r.sensor_coords[i * lr_n + j] = static_cast<float>(s1[i]);
        r.sensor_coords[lr_n * lr_n + i * lr_n + j] = static_cast<float>(s2[j]);
      }
    }
    const auto q1 = uniform_grid(dm.x1_min, dm.x1_max, n);
    const auto q2 = uniform_grid(dm.x2_min, dm.x2_max, n);
    r.query_coords.resize(2 * n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        r.query_coords[2 * (i * n + j)] = static_cast<float>(q1[i]);
        r.query_coords[2 * (i * n + j) + 1] = static_cast<float>(q2[j]);
      }
    }
  }
  return r;
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& config) {
  const DatasetConfig c = with_defaults(config);
  Dataset ds;
  ds.header = make_header(c);
  ds.samples.resize(c.n_samples);
  const Rng root(c.seed, 0);
  auto make_sample = [&](std::size_t i) {
    const Rng rng = root.substream(i);
    ds.samples[i] = c.problem == Problem::exp3 ? generate_exp3(c, rng)
                                               : generate_grid(c, ds.header, rng);
  };
  const std::size_t threads = std::min(worker_threads(), std::max<std::size_t>(1, c.n_samples));
  if (threads <= 1) {
    for (std::size_t i = 0; i < c.n_samples; ++i) make_sample(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < c.n_samples; i += threads) make_sample(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  validate_dataset(ds);
  return ds;
}

std::size_t DatasetHeader::lr_len() const {
  std::size_t n = 1;
  for (auto v : lr_shape) n *= v;
  return n;
}

double Dataset::param(std::size_t sample, const std::string& name) const {
  const auto& names = header.param_names;
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("dataset has no parameter '" + name + "'");
  return samples.at(sample).params[static_cast<std::size_t>(it - names.begin())];
}

ForcingSpec sample_forcing(const Dataset& ds, std::size_t i) {
  ForcingSpec f;
  const auto problem = problem_from_string(ds.header.family);
  switch (problem) {
    case Problem::exp1:
    case Problem::exp3:
      f.family = problem == Problem::exp1 ? ForcingFamily::exp1 : ForcingFamily::exp3;
      f.alpha = ds.param(i, "alpha");
      f.beta = ds.param(i, "beta");
      break;
    case Problem::exp2: f.family = ForcingFamily::exp2; break;
    case Problem::diff2d:
    case Problem::diff2d_var: f.family = ForcingFamily::none; break;
    case Problem::forced2d:
      f.family = ForcingFamily::spiral2d;
      f.spiral = {ds.param(i, "center_x1"), ds.param(i, "center_x2"), ds.param(i, "amplitude"),
                  ds.param(i, "pitch"),     ds.param(i, "r0"),        ds.param(i, "half_width")};
      break;
  }
  return f;
}

double sample_diffusion(const Dataset& ds, std::size_t i) { return ds.param(i, "D"); }

// ---------------------------------------------------------------------------
// Validation

void validate_dataset(const Dataset& ds) {
  const auto& h = ds.header;
  if (h.n_samples != ds.samples.size()) {
    throw FormatError("header declares " + std::to_string(h.n_samples) + " samples, found " +
                      std::to_string(ds.samples.size()));
  }
  const std::size_t axes = h.d + 1;
  if (h.coord_min.size() != axes || h.coord_max.size() != axes) {
    throw FormatError("coordinate bounds must list " + std::to_string(axes) + " axes");
  }
  auto inside = [&](double v, std::size_t axis) {
    const double span = h.coord_max[axis] - h.coord_min[axis];
    const double tol = 1e-6 * span;
    return v >= h.coord_min[axis] - tol && v <= h.coord_max[axis] + tol;
  };
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& r = ds.samples[i];
    const std::string where = "sample " + std::to_string(i) + ": ";
    if (r.params.size() != h.params_len() || r.sensor_coords.size() != h.sensor_len() ||
        r.lr_field.size() != h.lr_len() || r.query_coords.size() != h.query_len() ||
        r.hr_targets.size() != h.target_len()) {
      throw FormatError(where + "record sizes do not match the header");
    }
    for (const auto* vec : {&r.params, &r.sensor_coords, &r.lr_field, &r.query_coords,
                            &r.hr_targets}) {
      for (float v : *vec) {
        if (!std::isfinite(v)) throw FormatError(where + "non-finite value");
      }
    }
    for (std::size_t row = 0; row < h.sensor_rows(); ++row) {
      for (std::size_t j = 0; j < h.s; ++j) {
        if (!inside(r.sensor_coords[row * h.s + j], row)) {
          throw FormatError(where + "sensor coordinate outside the domain");
        }
      }
    }
    const std::size_t cols = h.query_cols();
    for (std::size_t q = 0; q < h.hr_query_count; ++q) {
      for (std::size_t a = 0; a < cols; ++a) {
        if (!inside(r.query_coords[q * cols + a], a)) {
          throw FormatError(where + "query coordinate outside the domain");
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_floats(std::ostream& out, const std::vector<float>& values) {
  std::string buf(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<float> read_floats(std::istream& in, std::size_t count, std::uint64_t& offset) {
  std::string buf(count * 4, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw FormatError("truncated data at byte offset " +
                      std::to_string(offset + static_cast<std::uint64_t>(in.gcount())) +
                      " (expected " + std::to_string(buf.size()) + " more bytes)");
  }
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[4 * i + b])) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  offset += buf.size();
  return out;
}

ordered_json header_json(const DatasetHeader& h) {
  ordered_json j;
  j["format"] = "SROP1";
  j["family"] = h.family;
  j["layout"] = to_string(h.layout);
  j["n_samples"] = h.n_samples;
  j["s"] = h.s;
  j["lr_shape"] = h.lr_shape;
  j["hr_query_count"] = h.hr_query_count;
  j["d"] = h.d;
  j["param_names"] = h.param_names;
  j["seed"] = h.seed;
  j["endianness"] = "little";
  j["hr_frames"] = h.hr_frames;
  j["lr_mode"] = h.lr_mode;
  j["coord_min"] = h.coord_min;
  j["coord_max"] = h.coord_max;
  j["lr_t_max"] = h.lr_t_max;
  return j;
}

DatasetHeader header_from_json(const ordered_json& j) {
  if (j.value("format", std::string{}) != "SROP1") throw FormatError("not an SROP1 file");
  if (j.value("endianness", std::string{}) != "little") {
    throw FormatError("unsupported endianness in SROP1 header");
  }
  DatasetHeader h;
  try {
    h.family = j.at("family").get<std::string>();
    h.layout = layout_from_string(j.at("layout").get<std::string>());
    h.n_samples = j.at("n_samples").get<std::size_t>();
    h.s = j.at("s").get<std::size_t>();
    h.lr_shape = j.at("lr_shape").get<std::vector<std::size_t>>();
    h.hr_query_count = j.at("hr_query_count").get<std::size_t>();
    h.d = j.at("d").get<std::size_t>();
    h.param_names = j.at("param_names").get<std::vector<std::string>>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.hr_frames = j.at("hr_frames").get<std::size_t>();
    h.lr_mode = j.at("lr_mode").get<std::string>();
    h.coord_min = j.at("coord_min").get<std::vector<double>>();
    h.coord_max = j.at("coord_max").get<std::vector<double>>();
    h.lr_t_max = j.at("lr_t_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad SROP1 header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad SROP1 header: ") + e.what());
  }
  problem_from_string(h.family);
  return h;
}

}  // namespace

void write_dataset(const Dataset& ds, std::ostream& out) {
  out << header_json(ds.header).dump() << '\n';
  for (const auto& r : ds.samples) {
    write_floats(out, r.params);
    write_floats(out, r.sensor_coords);
    write_floats(out, r.lr_field);
    write_floats(out, r.query_coords);
    write_floats(out, r.hr_targets);
  }
  if (!out) throw Error("failed to write dataset");
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_dataset(ds, out);
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing SROP1 header line at byte offset 0");
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("SROP1 header is not valid JSON: ") + e.what());
  }
  Dataset ds;
  ds.header = header_from_json(j);
  std::uint64_t offset = line.size() + 1;
  const auto& h = ds.header;
  ds.samples.resize(h.n_samples);
  for (auto& r : ds.samples) {
    r.params = read_floats(in, h.params_len(), offset);
    r.sensor_coords = read_floats(in, h.sensor_len(), offset);
    r.lr_field = read_floats(in, h.lr_len(), offset);
    r.query_coords = read_floats(in, h.query_len(), offset);
    r.hr_targets = read_floats(in, h.target_len(), offset);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after the last record at byte offset " +
                      std::to_string(offset));
  }
  validate_dataset(ds);
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

void build_dataset(const DatasetConfig& config, const std::filesystem::path& path) {
  write_dataset(generate_dataset(config), path);
}

}  // namespace srop
