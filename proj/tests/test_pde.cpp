#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "golden.hpp"
#include "srop/dataset.hpp"
#include "srop/errors.hpp"
#include "srop/pde.hpp"

using namespace srop;
using srop::testing::expect_golden;

namespace {

double forcing1(const ForcingSpec& f, double D, double x, double t) {
  return forcing_eval(f, D, std::span<const double>(&x, 1), t);
}

ForcingSpec family(ForcingFamily fam, double alpha = 0.0, double beta = 0.0) {
  ForcingSpec f;
  f.family = fam;
  f.alpha = alpha;
  f.beta = beta;
  return f;
}

Domain1D exp3_domain() { return Domain1D{-1.0, 1.0, 0.0, 2.0, 1.0}; }

// Relative L2 error of the FTCS solution of an exp3 sample on nx nodes.
double exp3_solver_error(double alpha, double beta, std::size_t nx, std::size_t nt) {
  const auto dom = exp3_domain();
  const auto x = uniform_grid(-1.0, 1.0, nx);
  std::vector<double> init(nx);
  for (std::size_t i = 0; i < nx; ++i) init[i] = exact_solution_exp3(alpha, beta, x[i], 0.0);
  const auto u = solve_heat_1d(dom, init, family(ForcingFamily::exp3, alpha, beta), nx, nt);
  double num = 0.0, den = 0.0;
  for (std::size_t f = 0; f < nt; ++f) {
    const double t = 2.0 * static_cast<double>(f) / static_cast<double>(nt - 1);
    for (std::size_t i = 0; i < nx; ++i) {
      const double e = exact_solution_exp3(alpha, beta, x[i], t);
      num += (u[f * nx + i] - e) * (u[f * nx + i] - e);
      den += e * e;
    }
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(Forcing, Exp1VanishesAtOrigin) {
  for (double t : {0.0, 0.7, 2.0}) {
    for (double a : {-6.0, 1.5, 6.0}) {
      EXPECT_EQ(forcing1(family(ForcingFamily::exp1, a, -0.4), 1e-3, 0.0, t), 0.0);
    }
  }
}

TEST(Forcing, Exp1PrintedFormula) {
  const double a = 2.5, b = -0.3, D = 1e-3, x = 0.4, t = 1.1;
  EXPECT_DOUBLE_EQ(forcing1(family(ForcingFamily::exp1, a, b), D, x, t),
                   (b + D * a) / 50.0 * std::exp(-2.0 * b * t) * std::sin(a * x));
}

TEST(Forcing, Exp2VanishesAtOrigin) {
  for (double t : {0.0, 0.3, 1.0}) {
    EXPECT_EQ(forcing1(family(ForcingFamily::exp2), 0.02, 0.0, t), 0.0);
  }
}

TEST(Forcing, Exp3GoldenValues) {
  // Independent symbolic evaluation of u_t - u_xx for the closed-form solution.
  EXPECT_NEAR(forcing1(family(ForcingFamily::exp3, 2.0, -0.5), 1.0, 0.5, 1.0),
              -1.8356688409917442763, 1e-12);
  EXPECT_NEAR(forcing1(family(ForcingFamily::exp3, 3.0, -0.25), 1.0, -0.3, 1.5),
              3.4507730155827745399, 1e-12);
}

TEST(Forcing, NoneIsZero) { EXPECT_EQ(forcing1(family(ForcingFamily::none), 1.0, 0.3, 0.2), 0.0); }

TEST(Forcing, FamilyNames) {
  EXPECT_EQ(forcing_family_from_string("exp3"), ForcingFamily::exp3);
  EXPECT_THROW(forcing_family_from_string("exp9"), ConfigError);
}

TEST(ExactSolution, BoundaryAndOrigin) {
  for (double t : {0.0, 1.3}) {
    for (double a : {-8.0, 3.0}) {
      EXPECT_DOUBLE_EQ(exact_solution_exp3(a, -0.5, 1.0, t), 0.5);
      EXPECT_DOUBLE_EQ(exact_solution_exp3(a, -0.5, -1.0, t), 0.5);
      EXPECT_DOUBLE_EQ(exact_solution_exp3(a, -0.5, 0.0, t), 0.5);
    }
  }
}

TEST(ExactSolution, SatisfiesForcedHeatEquation) {
  Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(-8, 8), b = rng.uniform(-1, 0);
    const double x = rng.uniform(-1, 1), t = rng.uniform(0, 2);
    const double g = std::exp(b * t);
    const double ut = 0.5 * b * g * (x * x - 1.0) * std::sin(a * x);
    const double uxx = 0.5 * g *
                       (2.0 * std::sin(a * x) + 4.0 * a * x * std::cos(a * x) -
                        a * a * (x * x - 1.0) * std::sin(a * x));
    EXPECT_LT(std::abs(ut - uxx - forcing1(family(ForcingFamily::exp3, a, b), 1.0, x, t)), 1e-10);
  }
}

TEST(Intervals, ZeroCountGivesZeroField) {
  Rng rng(1);
  const auto grid = uniform_grid(-1, 1, 33);
  const auto f = initial_state_1d_intervals(rng, grid, IntervalSampler{0, 0, 0.05, 0.25});
  EXPECT_EQ(f, std::vector<double>(33, 0.0));
}

TEST(Intervals, ConstructionSetsCoveredNodes) {
  const auto grid = uniform_grid(-1, 1, 21);
  const std::vector<Interval> one{{0.0, 0.15, 0.7}};
  const auto f = rasterize_intervals(one, grid);
  EXPECT_EQ(f[10], 0.7);  // x = 0
  EXPECT_EQ(f[11], 0.7);  // x = 0.1
  EXPECT_EQ(f[12], 0.0);  // x = 0.2
  const std::vector<Interval> whole{{0.0, 2.0, 0.4}};
  const auto g = rasterize_intervals(whole, grid);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 0.0);
  EXPECT_EQ(g[1], 0.4);
}

TEST(Intervals, LaterIntervalsOverwrite) {
  const auto grid = uniform_grid(-1, 1, 21);
  const std::vector<Interval> two{{0.0, 0.5, 0.2}, {0.2, 0.1, 0.9}};
  const auto f = rasterize_intervals(two, grid);
  EXPECT_EQ(f[8], 0.2);
  EXPECT_EQ(f[12], 0.9);
}

TEST(Intervals, SamplerRanges) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto ivs = sample_intervals(rng, -1.0, 1.0);
    ASSERT_GE(ivs.size(), 1u);
    ASSERT_LE(ivs.size(), 5u);
    for (const auto& iv : ivs) {
      EXPECT_GE(iv.center - iv.half_width, -1.0 - 1e-15);
      EXPECT_LE(iv.center + iv.half_width, 1.0 + 1e-15);
      EXPECT_GE(iv.value, 0.0);
      EXPECT_LT(iv.value, 1.0);
    }
  }
}

TEST(Intervals, Seed42Golden) {
  const auto grid = uniform_grid(-1, 1, 64);
  Rng a(42), b(42);
  const auto f = initial_state_1d_intervals(a, grid);
  EXPECT_EQ(f, initial_state_1d_intervals(b, grid));
  expect_golden("intervals_seed42.f64", f);
}

TEST(Disks, ZeroDisksGiveZeroField) {
  const auto g = uniform_grid(0, 4, 17);
  EXPECT_EQ(rasterize_disks({}, g, g), std::vector<double>(17 * 17, 0.0));
  Rng rng(3);
  Domain2D dom;
  EXPECT_EQ(initial_state_2d_disks(rng, dom, g, g, DiskSampler{0, 0, 0.2, 0.8}),
            std::vector<double>(17 * 17, 0.0));
}

TEST(Disks, ConstructionAroundGridNode) {
  const auto g = uniform_grid(0, 4, 17);  // spacing 0.25
  const std::vector<Disk> one{{2.0, 2.0, 0.3, 1.0}};
  const auto f = rasterize_disks(one, g, g);
  EXPECT_EQ(f[8 * 17 + 8], 1.0);
  EXPECT_EQ(f[9 * 17 + 8], 1.0);  // distance 0.25
  EXPECT_EQ(f[9 * 17 + 9], 0.0);  // distance 0.354
  EXPECT_EQ(f[8 * 17 + 10], 0.0);
  const double total = std::accumulate(f.begin(), f.end(), 0.0);
  EXPECT_EQ(total, 5.0);
}

TEST(Disks, SamplerRanges) {
  Domain2D dom;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto ds = sample_disks(rng, dom);
    ASSERT_GE(ds.size(), 1u);
    ASSERT_LE(ds.size(), 5u);
    for (const auto& d : ds) {
      EXPECT_GE(d.radius, 0.2);
      EXPECT_LT(d.radius, 0.8);
      EXPECT_GE(d.value, 0.0);
      EXPECT_LT(d.value, 1.0);
    }
  }
}

TEST(Disks, Seed7Golden) {
  Domain2D dom;
  const auto g = uniform_grid(0, 4, 72);
  Rng rng(7);
  const auto f = initial_state_2d_disks(rng, dom, g, g);
  expect_golden("disks_seed7.f64", f);
}

namespace {

std::vector<double> raster_forcing(const ForcingSpec& f, const std::vector<double>& g) {
  std::vector<double> out;
  for (double a : g) {
    for (double b : g) {
      const double p[2] = {a, b};
      out.push_back(forcing_eval(f, 0.1, p, 0.0));
    }
  }
  return out;
}

}  // namespace

TEST(Spiral, ZeroOutsideSupport) {
  Rng rng(3);
  const auto f = spiral_forcing_2d(rng, Domain2D{});
  const auto& s = f.spiral;
  const double reach = s.r0 + 4.0 * std::numbers::pi * s.pitch + s.half_width;
  for (double ang = 0.0; ang < 6.28; ang += 0.3) {
    const double p[2] = {s.center_x1 + 1.01 * reach * std::cos(ang),
                         s.center_x2 + 1.01 * reach * std::sin(ang)};
    EXPECT_EQ(forcing_eval(f, 0.1, p, 0.5), 0.0);
  }
}

TEST(Spiral, ZeroAmplitudeGivesZeroField) {
  Rng rng(3);
  auto f = spiral_forcing_2d(rng, Domain2D{});
  f.spiral.amplitude = 0.0;
  const auto r = raster_forcing(f, uniform_grid(0, 4, 40));
  EXPECT_TRUE(std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; }));
}

TEST(Spiral, ArmIsOnTheSpiral) {
  ForcingSpec f;
  f.family = ForcingFamily::spiral2d;
  f.spiral = SpiralParams{2.0, 2.0, 1.2, 0.1, 0.1, 0.05};
  for (double theta : {0.5, 2.0, 7.0, 12.0}) {
    const double r = 0.1 + 0.1 * theta;
    const double p[2] = {2.0 + r * std::cos(theta), 2.0 + r * std::sin(theta)};
    EXPECT_EQ(forcing_eval(f, 0.1, p, 0.0), 1.2) << theta;
  }
  const double beyond[2] = {2.0 + 0.1 + 0.1 * 4.0 * std::numbers::pi + 0.2, 2.0};
  EXPECT_EQ(forcing_eval(f, 0.1, beyond, 0.0), 0.0);
}

TEST(Spiral, SamplerRanges) {
  Domain2D dom;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto s = spiral_forcing_2d(rng, dom).spiral;
    EXPECT_GE(s.amplitude, 0.5);
    EXPECT_LT(s.amplitude, 1.5);
    EXPECT_GE(s.pitch, 0.05);
    EXPECT_LT(s.pitch, 0.15);
    EXPECT_GE(s.half_width, 0.05);
    EXPECT_LT(s.half_width, 0.1);
    EXPECT_GT(s.center_x1, dom.x1_min);
    EXPECT_LT(s.center_x1, dom.x1_max);
  }
}

TEST(Spiral, Seed3Golden) {
  Rng rng(3);
  const auto f = spiral_forcing_2d(rng, Domain2D{});
  expect_golden("spiral_seed3.f64", raster_forcing(f, uniform_grid(0, 4, 72)));
}

TEST(Heat1D, ZeroStaysZero) {
  const auto u = solve_heat_1d(Domain1D{}, std::vector<double>(16, 0.0), ForcingSpec{}, 16, 10);
  EXPECT_TRUE(std::all_of(u.begin(), u.end(), [](double v) { return v == 0.0; }));
}

TEST(Heat1D, FirstFrameIsInit) {
  Rng rng(5);
  const auto grid = uniform_grid(-1, 1, 40);
  const auto init = initial_state_1d_intervals(rng, grid);
  const auto u = solve_heat_1d(Domain1D{-1, 1, 0, 1, 0.05}, init, ForcingSpec{}, 40, 8);
  EXPECT_TRUE(std::equal(init.begin(), init.end(), u.begin()));
}

TEST(Heat1D, DiscreteMaximumPrinciple) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t nx = 48, nt = 30;
    const auto grid = uniform_grid(-1, 1, nx);
    const auto init = initial_state_1d_intervals(rng, grid);
    const auto u = solve_heat_1d(Domain1D{-1, 1, 0, 1, 0.1}, init, ForcingSpec{}, nx, nt);
    double prev = *std::max_element(u.begin(), u.begin() + nx);
    for (std::size_t f = 1; f < nt; ++f) {
      const double m = *std::max_element(u.begin() + f * nx, u.begin() + (f + 1) * nx);
      EXPECT_LE(m, prev + 1e-15);
      EXPECT_GE(*std::min_element(u.begin() + f * nx, u.begin() + (f + 1) * nx), 0.0);
      prev = m;
    }
  }
}

TEST(Heat1D, SubstepsKeepSchemeStable) {
  for (double D : {1e-3, 0.02, 1.0}) {
    for (std::size_t nx : {16u, 64u, 200u}) {
      const double dx = 2.0 / static_cast<double>(nx - 1);
      const double frame_dt = 2.0 / 79.0;
      const auto k = heat_substeps(D, frame_dt, 1.0 / (dx * dx));
      EXPECT_LE(D * frame_dt / static_cast<double>(k) / (dx * dx), 0.5);
    }
  }
}

TEST(Heat1D, BadResolutionIsConfigError) {
  EXPECT_THROW(solve_heat_1d(Domain1D{}, std::vector<double>(2, 0.0), ForcingSpec{}, 2, 10),
               ConfigError);
  EXPECT_THROW(solve_heat_1d(Domain1D{}, std::vector<double>(8, 0.0), ForcingSpec{}, 8, 1),
               ConfigError);
  EXPECT_THROW(solve_heat_1d(Domain1D{}, std::vector<double>(7, 0.0), ForcingSpec{}, 8, 4),
               DimensionError);
}

TEST(Heat1D, Exp3AnalyticOracle) {
  Rng rng(31);
  for (int i = 0; i < 10; ++i) {
    const double a = rng.uniform(-8, 8), b = rng.uniform(-1, 0);
    const double e60 = exp3_solver_error(a, b, 60, 60);
    const double e119 = exp3_solver_error(a, b, 119, 60);
    EXPECT_LT(e60, 1e-2) << "alpha " << a << " beta " << b;
    const double ratio = e60 / e119;
    EXPECT_GE(ratio, 3.0) << "alpha " << a << " beta " << b;
    EXPECT_LE(ratio, 5.0) << "alpha " << a << " beta " << b;
  }
}

TEST(Heat1D, Exp3ObservedOrder) {
  const double a = 5.0, b = -0.5;
  const double e1 = exp3_solver_error(a, b, 31, 60);
  const double e2 = exp3_solver_error(a, b, 61, 60);
  const double e3 = exp3_solver_error(a, b, 121, 60);
  const double p1 = std::log2(e1 / e2), p2 = std::log2(e2 / e3);
  EXPECT_GE(p1, 1.5);
  EXPECT_LE(p1, 2.5);
  EXPECT_GE(p2, 1.5);
  EXPECT_LE(p2, 2.5);
}

TEST(Heat2D, ZeroStaysZero) {
  const auto u = solve_heat_2d(Domain2D{}, std::vector<double>(100, 0.0), ForcingSpec{}, 10, 5);
  EXPECT_TRUE(std::all_of(u.begin(), u.end(), [](double v) { return v == 0.0; }));
}

TEST(Heat2D, MassNonIncreasingAndMaximumPrinciple) {
  Domain2D dom;
  const std::size_t n = 24, nt = 12;
  const auto g = uniform_grid(0, 4, n);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto init = initial_state_2d_disks(rng, dom, g, g);
    const auto u = solve_heat_2d(dom, init, ForcingSpec{}, n, nt);
    EXPECT_TRUE(std::equal(init.begin(), init.end(), u.begin()));
    double prev_mass = std::accumulate(u.begin(), u.begin() + n * n, 0.0);
    double prev_max = *std::max_element(u.begin(), u.begin() + n * n);
    for (std::size_t f = 1; f < nt; ++f) {
      const auto b = u.begin() + f * n * n, e = b + n * n;
      const double mass = std::accumulate(b, e, 0.0);
      const double mx = *std::max_element(b, e);
      EXPECT_LE(mass, prev_mass + 1e-12);
      EXPECT_LE(mx, prev_max + 1e-15);
      prev_mass = mass;
      prev_max = mx;
    }
  }
}

TEST(Heat2D, CenteredDiskStaysRotationSymmetric) {
  Domain2D dom;
  const std::size_t n = 41, nt = 6;
  const auto g = uniform_grid(0, 4, n);
  const std::vector<Disk> one{{2.0, 2.0, 0.73, 1.0}};
  const auto init = rasterize_disks(one, g, g);
  const auto u = solve_heat_2d(dom, init, ForcingSpec{}, n, nt);
  double worst = 0.0;
  for (std::size_t f = 0; f < nt; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double a = u[f * n * n + i * n + j];
        const double b = u[f * n * n + j * n + (n - 1 - i)];
        worst = std::max(worst, std::abs(a - b));
      }
    }
  }
  EXPECT_LT(worst, 1e-10);
  EXPECT_GT(u[(nt - 1) * n * n + 20 * n + 20], 0.0);
}

TEST(Heat2D, SpiralForcingAddsMass) {
  Domain2D dom;
  dom.D = 0.1;
  Rng rng(3);
  const auto f = spiral_forcing_2d(rng, dom);
  const auto u = solve_heat_2d(dom, std::vector<double>(24 * 24, 0.0), f, 24, 5);
  EXPECT_GT(std::accumulate(u.end() - 24 * 24, u.end(), 0.0), 0.0);
}

TEST(Downsample, Examples) {
  const std::vector<double> v{0, 1, 2, 3};
  const std::vector<std::size_t> shape{4};
  EXPECT_EQ(downsample(v, shape, std::vector<std::size_t>{1}), v);
  EXPECT_EQ(downsample(v, shape, std::vector<std::size_t>{2}), (std::vector<double>{0, 2}));
  EXPECT_THROW(downsample(v, shape, std::vector<std::size_t>{3}), ConfigError);
  std::vector<double> grid(6 * 4);
  std::iota(grid.begin(), grid.end(), 0.0);
  const std::vector<std::size_t> s2{6, 4};
  EXPECT_EQ(downsample(grid, s2, std::vector<std::size_t>{3, 2}),
            (std::vector<double>{0, 2, 12, 14}));
}

TEST(MakeLr, CoarseSolveOnExp3MatchesAnalytic) {
  GridProblem p;
  p.dims = 1;
  p.domain1 = exp3_domain();
  p.forcing = family(ForcingFamily::exp3, 4.0, -0.5);
  p.init = GridProblem::Init::exp3_exact;
  const std::size_t n = 64, nt = 80;
  const auto hr = p.solve(n, nt);
  const std::vector<std::size_t> shape{nt, n};
  const auto lr = make_lr(p, hr, shape, LrMode::coarse_solve, 2, 4);
  const std::size_t ln = 16, lt = 40;
  ASSERT_EQ(lr.size(), ln * lt);
  const auto x = uniform_grid(-1, 1, ln);
  double num = 0, den = 0;
  for (std::size_t f = 0; f < lt; ++f) {
    const double t = 2.0 * static_cast<double>(f) / static_cast<double>(lt - 1);
    for (std::size_t i = 0; i < ln; ++i) {
      const double e = exact_solution_exp3(4.0, -0.5, x[i], t);
      num += (lr[f * ln + i] - e) * (lr[f * ln + i] - e);
      den += e * e;
    }
  }
  EXPECT_LT(std::sqrt(num / den), 5e-2);
}

TEST(Locations, SinglePointStrictlyInside) {
  Rng rng(1);
  const auto p = sample_locations(rng, 1, exp3_domain(), 12);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_GT(p[0], -1.0);
  EXPECT_LT(p[0], 1.0);
}

TEST(Locations, InsideAndSorted) {
  Rng rng(2);
  const auto p = sample_locations(rng, 244, exp3_domain(), 12);
  ASSERT_EQ(p.size(), 488u);
  for (std::size_t i = 0; i < 244; ++i) {
    EXPECT_GT(p[2 * i], -1.0);
    EXPECT_LT(p[2 * i], 1.0);
    EXPECT_GE(p[2 * i + 1], 0.0);
    EXPECT_LE(p[2 * i + 1], 2.0);
    if (i > 0) {
      const bool ordered = p[2 * i - 1] < p[2 * i + 1] ||
                           (p[2 * i - 1] == p[2 * i + 1] && p[2 * i - 2] <= p[2 * i]);
      EXPECT_TRUE(ordered) << i;
    }
  }
  std::vector<double> times;
  for (std::size_t i = 0; i < 244; ++i) times.push_back(p[2 * i + 1]);
  times.erase(std::unique(times.begin(), times.end()), times.end());
  EXPECT_EQ(times, uniform_grid(0.0, 2.0, 12));
}

TEST(Locations, Seed11Golden) {
  Rng rng(11);
  expect_golden("locations_seed11.f64", sample_locations(rng, 144, exp3_domain(), 12));
}
