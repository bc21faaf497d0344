#pragma once

// Forced diffusion problems, their forcings and exact solutions, random
// initial states and explicit finite-difference solvers.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srop/rng.hpp"

namespace srop {

struct Domain1D {
  double x_min = -1.0;
  double x_max = 1.0;
  double t_min = 0.0;
  double t_max = 2.0;
  double D = 1e-3;

  void validate() const;
};

struct Domain2D {
  double x1_min = 0.0;
  double x1_max = 4.0;
  double x2_min = 0.0;
  double x2_max = 4.0;
  double t_min = 0.0;
  double t_max = 1.0;
  double D = 0.15;

  void validate() const;
};

enum class ForcingFamily { none, exp1, exp2, exp3, spiral2d };

const char* to_string(ForcingFamily family);
ForcingFamily forcing_family_from_string(const std::string& name);

/// Archimedean spiral arm r = r0 + pitch * theta, theta in [0, 4 pi].
struct SpiralParams {
  double center_x1 = 2.0;
  double center_x2 = 2.0;
  double amplitude = 1.0;
  double pitch = 0.1;
  double r0 = 0.1;
  double half_width = 0.075;
};

struct ForcingSpec {
  ForcingFamily family = ForcingFamily::none;
  double alpha = 0.0;
  double beta = 0.0;
  SpiralParams spiral;
};

/// Pointwise forcing F(x, t). x holds one coordinate in 1D, two in 2D.
double forcing_eval(const ForcingSpec& spec, double D, std::span<const double> x, double t);

/// u(x, t) = 0.5 + 0.5 e^{beta t} (x^2 - 1) sin(alpha x)
double exact_solution_exp3(double alpha, double beta, double x, double t);

/// Uniform node coordinates including both endpoints.
std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

// ---------------------------------------------------------------------------
// Random initial states

struct Interval {
  double center;
  double half_width;
  double value;
};

struct IntervalSampler {
  std::int64_t min_count = 1;
  std::int64_t max_count = 5;
  /// Half-widths as a fraction of the domain length.
  double min_half_width = 0.05;
  double max_half_width = 0.25;
};

std::vector<Interval> sample_intervals(Rng& rng, double x_min, double x_max,
                                       const IntervalSampler& sampler = {});
/// Later intervals overwrite earlier ones; both endpoints are forced to 0.
std::vector<double> rasterize_intervals(std::span<const Interval> intervals,
                                        std::span<const double> grid);
std::vector<double> initial_state_1d_intervals(Rng& rng, std::span<const double> grid,
                                               const IntervalSampler& sampler = {});

struct Disk {
  double center_x1;
  double center_x2;
  double radius;
  double value;
};

struct DiskSampler {
  std::int64_t min_count = 1;
  std::int64_t max_count = 5;
  double min_radius = 0.2;
  double max_radius = 0.8;
};

std::vector<Disk> sample_disks(Rng& rng, const Domain2D& domain, const DiskSampler& sampler = {});
/// Row-major [n1 x n2] field (x1 varies slowest); the boundary ring is 0.
std::vector<double> rasterize_disks(std::span<const Disk> disks, std::span<const double> grid_x1,
                                    std::span<const double> grid_x2);
std::vector<double> initial_state_2d_disks(Rng& rng, const Domain2D& domain,
                                           std::span<const double> grid_x1,
                                           std::span<const double> grid_x2,
                                           const DiskSampler& sampler = {});

ForcingSpec spiral_forcing_2d(Rng& rng, const Domain2D& domain);

// ---------------------------------------------------------------------------
// Solvers

/// Largest diffusion number used for the internal explicit step.
inline constexpr double kMaxDiffusionNumber = 0.45;

/// FTCS on nx uniform nodes, nt output frames spanning [t_min, t_max].
/// Boundary nodes keep their values from `init` (zero for every sampler
/// except the exp3 analytic state). Returns [nt x nx] row-major.
std::vector<double> solve_heat_1d(const Domain1D& domain, std::span<const double> init,
                                  const ForcingSpec& forcing, std::size_t nx, std::size_t nt);

/// 2D FTCS on an n x n grid; returns [nt x n x n].
std::vector<double> solve_heat_2d(const Domain2D& domain, std::span<const double> init,
                                  const ForcingSpec& forcing, std::size_t n, std::size_t nt);

/// Internal sub-steps per output frame chosen by the solvers.
std::size_t heat_substeps(double D, double frame_dt, double inverse_dx2_sum);

// ---------------------------------------------------------------------------
// Low-resolution inputs and random locations

enum class LrMode { coarse_solve, downsample };

/// Strided subsampling of a row-major field of the given shape.
std::vector<double> downsample(std::span<const double> field, std::span<const std::size_t> shape,
                               std::span<const std::size_t> factors);

/// count spacetime points (x, t): x uniform in the open interval, t taken from
/// a uniform grid of n_frames frames, point i assigned to frame
/// floor(i * n_frames / count). Sorted by (t, x). Returns [count x 2].
std::vector<double> sample_locations(Rng& rng, std::size_t count, const Domain1D& domain,
                                     std::size_t n_frames);

}  // namespace srop
