#include "srop/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "srop/errors.hpp"

namespace srop {

void Domain1D::validate() const {
  if (!(x_min < x_max) || !(t_min < t_max) || !(D > 0.0)) {
    throw ConfigError("Domain1D requires x_min < x_max, t_min < t_max and D > 0");
  }
}

void Domain2D::validate() const {
  if (!(x1_min < x1_max) || !(x2_min < x2_max) || !(t_min < t_max) || !(D > 0.0)) {
    throw ConfigError("Domain2D requires nonempty ranges and D > 0");
  }
}

const char* to_string(ForcingFamily family) {
  switch (family) {
    case ForcingFamily::none: return "none";
    case ForcingFamily::exp1: return "exp1";
    case ForcingFamily::exp2: return "exp2";
    case ForcingFamily::exp3: return "exp3";
    case ForcingFamily::spiral2d: return "spiral2d";
  }
  return "?";
}

ForcingFamily forcing_family_from_string(const std::string& name) {
  for (auto f : {ForcingFamily::none, ForcingFamily::exp1, ForcingFamily::exp2,
                 ForcingFamily::exp3, ForcingFamily::spiral2d}) {
    if (name == to_string(f)) return f;
  }
  throw ConfigError("unknown forcing family '" + name + "'");
}

namespace {

double spiral_value(const SpiralParams& s, double x1, double x2) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double dx = x1 - s.center_x1;
  const double dy = x2 - s.center_x2;
  const double rho = std::hypot(dx, dy);
  double phi = std::atan2(dy, dx);
  if (phi < 0.0) phi += two_pi;
  for (int turn = 0; turn < 3; ++turn) {
    const double theta = phi + two_pi * turn;
    if (theta > 2.0 * two_pi) break;
    if (std::abs(rho - (s.r0 + s.pitch * theta)) <= s.half_width) return s.amplitude;
  }
  return 0.0;
}

}  // namespace

double forcing_eval(const ForcingSpec& spec, double D, std::span<const double> x, double t) {
  switch (spec.family) {
    case ForcingFamily::none:
      return 0.0;
    case ForcingFamily::exp1: {
      const double a = spec.alpha, b = spec.beta;
      return (b + D * a) / 50.0 * std::exp(-2.0 * b * t) * std::sin(a * x[0]);
    }
    case ForcingFamily::exp2:
      return 0.6 * std::sin(12.0 * x[0]) * std::exp(0.2 * x[0] - 0.5 * t);
    case ForcingFamily::exp3: {
      const double a = spec.alpha, b = spec.beta, xv = x[0];
      const double growth = std::exp(b * t);
      return 0.5 * ((xv * xv - 1.0) * (a * a + b) - 2.0) * std::sin(a * xv) * growth -
             2.0 * a * xv * std::cos(a * xv) * growth;
    }
    case ForcingFamily::spiral2d:
      if (x.size() < 2) throw DimensionError("spiral2d forcing needs a 2-D point");
      return spiral_value(spec.spiral, x[0], x[1]);
  }
  throw ConfigError("unknown forcing family");
}

double exact_solution_exp3(double alpha, double beta, double x, double t) {
  return 0.5 + 0.5 * std::exp(beta * t) * (x * x - 1.0) * std::sin(alpha * x);
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  if (n < 2) throw ConfigError("uniform_grid needs at least two nodes");
  std::vector<double> g(n);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + h * static_cast<double>(i);
  g.back() = hi;
  return g;
}

// ---------------------------------------------------------------------------
// Initial states

std::vector<Interval> sample_intervals(Rng& rng, double x_min, double x_max,
                                       const IntervalSampler& sampler) {
  const double length = x_max - x_min;
  const auto count = rng.uniform_int(sampler.min_count, sampler.max_count);
  std::vector<Interval> out;
  for (std::int64_t i = 0; i < count; ++i) {
    Interval iv{};
    iv.center = rng.uniform(x_min, x_max);
    iv.half_width = length * rng.uniform(sampler.min_half_width, sampler.max_half_width);
    iv.value = rng.uniform();
    // Clip to the domain, keeping the clipped interval's own center and half-width.
    const double lo = std::max(x_min, iv.center - iv.half_width);
    const double hi = std::min(x_max, iv.center + iv.half_width);
    iv.center = 0.5 * (lo + hi);
    iv.half_width = 0.5 * (hi - lo);
    out.push_back(iv);
  }
  return out;
}

std::vector<double> rasterize_intervals(std::span<const Interval> intervals,
                                        std::span<const double> grid) {
  std::vector<double> field(grid.size(), 0.0);
  for (const auto& iv : intervals) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::abs(grid[i] - iv.center) <= iv.half_width) field[i] = iv.value;
    }
  }
  if (!field.empty()) {
    field.front() = 0.0;
    field.back() = 0.0;
  }
  return field;
}

std::vector<double> initial_state_1d_intervals(Rng& rng, std::span<const double> grid,
                                               const IntervalSampler& sampler) {
  if (grid.empty()) throw ContractError("initial_state_1d_intervals: empty grid");
  const auto intervals = sample_intervals(rng, grid.front(), grid.back(), sampler);
  return rasterize_intervals(intervals, grid);
}

std::vector<Disk> sample_disks(Rng& rng, const Domain2D& domain, const DiskSampler& sampler) {
  const auto count = rng.uniform_int(sampler.min_count, sampler.max_count);
  std::vector<Disk> out;
  for (std::int64_t i = 0; i < count; ++i) {
    Disk d{};
    d.center_x1 = rng.uniform(domain.x1_min, domain.x1_max);
    d.center_x2 = rng.uniform(domain.x2_min, domain.x2_max);
    d.radius = rng.uniform(sampler.min_radius, sampler.max_radius);
    d.value = rng.uniform();
    out.push_back(d);
  }
  return out;
}

std::vector<double> rasterize_disks(std::span<const Disk> disks, std::span<const double> grid_x1,
                                    std::span<const double> grid_x2) {
  const std::size_t n1 = grid_x1.size(), n2 = grid_x2.size();
  std::vector<double> field(n1 * n2, 0.0);
  for (const auto& d : disks) {
    for (std::size_t i = 0; i < n1; ++i) {
      for (std::size_t j = 0; j < n2; ++j) {
        if (std::hypot(grid_x1[i] - d.center_x1, grid_x2[j] - d.center_x2) <= d.radius) {
          field[i * n2 + j] = d.value;
        }
      }
    }
  }
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      if (i == 0 || j == 0 || i + 1 == n1 || j + 1 == n2) field[i * n2 + j] = 0.0;
    }
  }
  return field;
}

std::vector<double> initial_state_2d_disks(Rng& rng, const Domain2D& domain,
                                           std::span<const double> grid_x1,
                                           std::span<const double> grid_x2,
                                           const DiskSampler& sampler) {
  const auto disks = sample_disks(rng, domain, sampler);
  return rasterize_disks(disks, grid_x1, grid_x2);
}

ForcingSpec spiral_forcing_2d(Rng& rng, const Domain2D& domain) {
  ForcingSpec spec;
  spec.family = ForcingFamily::spiral2d;
  auto& s = spec.spiral;
  s.center_x1 = rng.uniform(domain.x1_min, domain.x1_max);
  s.center_x2 = rng.uniform(domain.x2_min, domain.x2_max);
  s.amplitude = rng.uniform(0.5, 1.5);
  s.pitch = rng.uniform(0.05, 0.15);
  s.half_width = rng.uniform(0.05, 0.1);
  s.r0 = rng.uniform(0.0, 0.2);
  return spec;
}

// ---------------------------------------------------------------------------
// Solvers

std::size_t heat_substeps(double D, double frame_dt, double inverse_dx2_sum) {
  const double steps = std::ceil(frame_dt * D * inverse_dx2_sum / kMaxDiffusionNumber);
  return std::max<std::size_t>(1, static_cast<std::size_t>(steps));
}

namespace {

void require_finite(std::span<const double> u, std::size_t frame) {
  for (double v : u) {
    if (!std::isfinite(v)) {
      throw NumericalError("heat solver produced a non-finite value at frame " +
                           std::to_string(frame));
    }
  }
}

}  // namespace

std::vector<double> solve_heat_1d(const Domain1D& domain, std::span<const double> init,
                                  const ForcingSpec& forcing, std::size_t nx, std::size_t nt) {
  domain.validate();
  if (nx < 3 || nt < 2) {
    throw ConfigError("solve_heat_1d: need nx >= 3 and nt >= 2, got nx=" + std::to_string(nx) +
                      ", nt=" + std::to_string(nt));
  }
  if (init.size() != nx) {
    throw DimensionError("solve_heat_1d: initial state has " + std::to_string(init.size()) +
                         " values for " + std::to_string(nx) + " nodes");
  }
  const auto x = uniform_grid(domain.x_min, domain.x_max, nx);
  const double dx = (domain.x_max - domain.x_min) / static_cast<double>(nx - 1);
  const double frame_dt = (domain.t_max - domain.t_min) / static_cast<double>(nt - 1);
  const std::size_t nsub = heat_substeps(domain.D, frame_dt, 1.0 / (dx * dx));
  const double dt = frame_dt / static_cast<double>(nsub);
  const double r = domain.D * dt / (dx * dx);
  if (r > 0.5) throw NumericalError("solve_heat_1d: unstable diffusion number");

  std::vector<double> out(nt * nx);
  std::vector<double> u(init.begin(), init.end());
  std::vector<double> next(nx);
  std::copy(u.begin(), u.end(), out.begin());
  const bool forced = forcing.family != ForcingFamily::none;
  for (std::size_t frame = 1; frame < nt; ++frame) {
    for (std::size_t s = 0; s < nsub; ++s) {
      const double t = domain.t_min + static_cast<double>((frame - 1) * nsub + s) * dt;
      next.front() = u.front();
      next.back() = u.back();
      for (std::size_t i = 1; i + 1 < nx; ++i) {
        double v = u[i] + r * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
        if (forced) v += dt * forcing_eval(forcing, domain.D, std::span(&x[i], 1), t);
        next[i] = v;
      }
      u.swap(next);
    }
    require_finite(u, frame);
    std::copy(u.begin(), u.end(), out.begin() + frame * nx);
  }
  return out;
}

std::vector<double> solve_heat_2d(const Domain2D& domain, std::span<const double> init,
                                  const ForcingSpec& forcing, std::size_t n, std::size_t nt) {
  domain.validate();
  if (n < 3 || nt < 2) {
    throw ConfigError("solve_heat_2d: need n >= 3 and nt >= 2, got n=" + std::to_string(n) +
                      ", nt=" + std::to_string(nt));
  }
  if (init.size() != n * n) {
    throw DimensionError("solve_heat_2d: initial state has " + std::to_string(init.size()) +
                         " values for a " + std::to_string(n) + "x" + std::to_string(n) +
                         " grid");
  }
  const auto x1 = uniform_grid(domain.x1_min, domain.x1_max, n);
  const auto x2 = uniform_grid(domain.x2_min, domain.x2_max, n);
  const double dx1 = (domain.x1_max - domain.x1_min) / static_cast<double>(n - 1);
  const double dx2 = (domain.x2_max - domain.x2_min) / static_cast<double>(n - 1);
  const double frame_dt = (domain.t_max - domain.t_min) / static_cast<double>(nt - 1);
  const std::size_t nsub =
      heat_substeps(domain.D, frame_dt, 1.0 / (dx1 * dx1) + 1.0 / (dx2 * dx2));
  const double dt = frame_dt / static_cast<double>(nsub);
  const double r1 = domain.D * dt / (dx1 * dx1);
  const double r2 = domain.D * dt / (dx2 * dx2);
  if (r1 + r2 > 0.5) throw NumericalError("solve_heat_2d: unstable diffusion number");

  const bool forced = forcing.family != ForcingFamily::none;
  // Static spiral forcing is sampled once per node.
  std::vector<double> static_force;
  if (forcing.family == ForcingFamily::spiral2d) {
    static_force.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double p[2] = {x1[i], x2[j]};
        static_force[i * n + j] = forcing_eval(forcing, domain.D, p, domain.t_min);
      }
    }
  }

  std::vector<double> out(nt * n * n);
  std::vector<double> u(init.begin(), init.end());
  std::vector<double> next(u);
  std::copy(u.begin(), u.end(), out.begin());
  for (std::size_t frame = 1; frame < nt; ++frame) {
    for (std::size_t s = 0; s < nsub; ++s) {
      const double t = domain.t_min + static_cast<double>((frame - 1) * nsub + s) * dt;
      for (std::size_t i = 1; i + 1 < n; ++i) {
        for (std::size_t j = 1; j + 1 < n; ++j) {
          const std::size_t k = i * n + j;
          double v = u[k] + r1 * (u[k + n] - 2.0 * u[k] + u[k - n]) +
                     r2 * (u[k + 1] - 2.0 * u[k] + u[k - 1]);
          if (forced) {
            if (!static_force.empty()) {
              v += dt * static_force[k];
            } else {
              const double p[2] = {x1[i], x2[j]};
              v += dt * forcing_eval(forcing, domain.D, p, t);
            }
          }
          next[k] = v;
        }
      }
      u.swap(next);
    }
    require_finite(u, frame);
    std::copy(u.begin(), u.end(), out.begin() + frame * n * n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// LR helpers and random locations

std::vector<double> downsample(std::span<const double> field, std::span<const std::size_t> shape,
                               std::span<const std::size_t> factors) {
  if (shape.size() != factors.size()) {
    throw DimensionError("downsample: " + std::to_string(factors.size()) + " factors for a rank-" +
                         std::to_string(shape.size()) + " field");
  }
  std::size_t total = 1;
  for (auto d : shape) total *= d;
  if (total != field.size()) throw DimensionError("downsample: field size does not match shape");
  std::vector<std::size_t> out_shape(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (factors[a] == 0 || shape[a] % factors[a] != 0) {
      throw ConfigError("downsample: factor " + std::to_string(factors[a]) +
                        " does not divide resolution " + std::to_string(shape[a]));
    }
    out_shape[a] = shape[a] / factors[a];
  }
  std::size_t out_total = 1;
  for (auto d : out_shape) out_total *= d;
  std::vector<double> out(out_total);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t o = 0; o < out_total; ++o) {
    std::size_t rem = o, src = 0;
    for (std::size_t a = shape.size(); a-- > 0;) {
      idx[a] = rem % out_shape[a];
      rem /= out_shape[a];
    }
    for (std::size_t a = 0; a < shape.size(); ++a) src = src * shape[a] + idx[a] * factors[a];
    out[o] = field[src];
  }
  return out;
}

std::vector<double> sample_locations(Rng& rng, std::size_t count, const Domain1D& domain,
                                     std::size_t n_frames) {
  if (count == 0) throw ContractError("sample_locations: count must be positive");
  if (n_frames == 0) throw ContractError("sample_locations: need at least one time frame");
  const auto times =
      n_frames == 1 ? std::vector<double>{domain.t_min}
                    : uniform_grid(domain.t_min, domain.t_max, n_frames);
  struct Point {
    double x, t;
  };
  std::vector<Point> pts(count);
  for (std::size_t i = 0; i < count; ++i) {
    double x;
    do {
      x = rng.uniform(domain.x_min, domain.x_max);
    } while (x <= domain.x_min);  // open interval
    pts[i] = {x, times[i * n_frames / count]};
  }
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.t < b.t || (a.t == b.t && a.x < b.x);
  });
  std::vector<double> out(2 * count);
  for (std::size_t i = 0; i < count; ++i) {
    out[2 * i] = pts[i].x;
    out[2 * i + 1] = pts[i].t;
  }
  return out;
}

}  // namespace srop
