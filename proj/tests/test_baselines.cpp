#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "srop/baselines.hpp"
#include "srop/errors.hpp"

using namespace srop;

namespace {

using Fn = std::function<double(double, double)>;

/// 1D temporal sample: s sensors on [0, 1], T LR frames on [0, lr_t_max],
/// F HR frames on [0, 1], queries at the given x.
std::pair<DatasetHeader, SampleRecord> grid_1d(std::size_t s, std::size_t T, std::size_t F,
                                               std::vector<double> xq, const Fn& f,
                                               double lr_t_max = 1.0) {
  DatasetHeader h;
  h.layout = Layout::temporal;
  h.d = 1;
  h.s = s;
  h.lr_shape = {T, s};
  h.hr_frames = F;
  h.hr_query_count = xq.size();
  h.coord_min = {0.0, 0.0};
  h.coord_max = {1.0, 1.0};
  h.lr_t_max = lr_t_max;
  SampleRecord r;
  for (std::size_t j = 0; j < s; ++j) r.sensor_coords.push_back(static_cast<float>(j) / (s - 1));
  for (std::size_t t = 0; t < T; ++t) {
    const double tv = lr_t_max * static_cast<double>(t) / static_cast<double>(T - 1);
    for (std::size_t j = 0; j < s; ++j) {
      r.lr_field.push_back(static_cast<float>(f(r.sensor_coords[j], tv)));
    }
  }
  for (double x : xq) r.query_coords.push_back(static_cast<float>(x));
  return {h, r};
}

std::pair<DatasetHeader, SampleRecord> scattered(std::size_t s, std::size_t m, const Fn& f,
                                                 std::uint64_t seed) {
  DatasetHeader h;
  h.layout = Layout::spacetime;
  h.d = 1;
  h.s = s;
  h.lr_shape = {s};
  h.hr_query_count = m;
  h.coord_min = {-1.0, 0.0};
  h.coord_max = {1.0, 2.0};
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ux(-1.0, 1.0), ut(0.0, 2.0);
  SampleRecord r;
  r.sensor_coords.resize(2 * s);
  for (std::size_t j = 0; j < s; ++j) {
    r.sensor_coords[j] = static_cast<float>(ux(gen));
    r.sensor_coords[s + j] = static_cast<float>(ut(gen));
    r.lr_field.push_back(static_cast<float>(f(r.sensor_coords[j], r.sensor_coords[s + j])));
  }
  for (std::size_t k = 0; k < m; ++k) {
    r.query_coords.push_back(static_cast<float>(ux(gen)));
    r.query_coords.push_back(static_cast<float>(ut(gen)));
  }
  return {h, r};
}

}  // namespace

TEST(CatmullRom, PassesThroughNodes) {
  const std::vector<double> v{0.3, -1.0, 2.0, 0.5, 4.0};
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(catmull_rom(v, i), v[i]);
}

TEST(CatmullRom, ReproducesQuadraticsAwayFromEnds) {
  auto f = [](double x) { return 1.5 - 2.0 * x + 0.75 * x * x; };
  std::vector<double> v;
  for (int i = 0; i < 9; ++i) v.push_back(f(i));
  for (double pos = 1.0; pos <= 7.0; pos += 0.125) {
    EXPECT_NEAR(catmull_rom(v, pos), f(pos), 1e-10) << pos;
  }
}

TEST(CatmullRom, CubicErrorShrinksAtThirdOrder) {
  auto f = [](double x) { return x * x * x - 0.4 * x; };
  auto worst = [&](std::size_t n) {
    const double h = 1.0 / static_cast<double>(n - 1);
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(f(i * h));
    double e = 0.0;
    for (std::size_t i = 1; i + 2 < n; ++i) {
      e = std::max(e, std::abs(catmull_rom(v, i + 0.25) - f((i + 0.25) * h)));
    }
    return e;
  };
  const double e1 = worst(11), e2 = worst(21), e3 = worst(41);
  EXPECT_GT(e1, 1e-6);
  EXPECT_NEAR(std::log2(e1 / e2), 3.0, 0.3);
  EXPECT_NEAR(std::log2(e2 / e3), 3.0, 0.3);
}

TEST(CatmullRom, ClampsOutsideAndHandlesSingleValue) {
  const std::vector<double> v{1.0, 2.0, 4.0};
  EXPECT_EQ(catmull_rom(v, -3.0), 1.0);
  EXPECT_EQ(catmull_rom(v, 9.0), 4.0);
  EXPECT_EQ(catmull_rom(std::vector<double>{7.0}, 0.4), 7.0);
  EXPECT_THROW(catmull_rom(std::vector<double>{}, 0.0), ContractError);
}

TEST(BicubicGrid, ReproducesConstants) {
  const auto [h, r] = grid_1d(8, 4, 7, {0.0, 0.13, 0.5, 0.91, 1.0},
                              [](double, double) { return 2.25; });
  for (double v : bicubic_grid(h, r)) EXPECT_NEAR(v, 2.25, 1e-12);
}

TEST(BicubicGrid, QuadraticInSpaceLinearInTime) {
  const Fn f = [](double x, double t) { return 0.5 + x - 2.0 * x * x + 3.0 * t * x - t; };
  const std::vector<double> xq{0.3, 0.4, 0.55, 0.7};
  const auto [h, r] = grid_1d(8, 4, 7, xq, f);
  const auto out = bicubic_grid(h, r);
  ASSERT_EQ(out.size(), 7u * 4u);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t q = 0; q < 4; ++q) {
      EXPECT_NEAR(out[i * 4 + q], f(r.query_coords[q], i / 6.0), 1e-6) << i << "," << q;
    }
  }
}

TEST(BicubicGrid, HoldsLastFrameBeyondPartialInput) {
  const Fn f = [](double x, double t) { return x + t; };
  const auto [h, r] = grid_1d(6, 3, 5, {0.5}, f, 0.5);
  const auto out = bicubic_grid(h, r);
  EXPECT_NEAR(out[0], 0.5, 1e-6);
  EXPECT_NEAR(out[1], 0.75, 1e-6);
  EXPECT_NEAR(out[2], 1.0, 1e-6);
  EXPECT_EQ(out[3], out[2]);
  EXPECT_EQ(out[4], out[2]);
}

TEST(BicubicGrid, TwoDimensionalTensorQuadratic) {
  const std::size_t n = 7, T = 2;
  DatasetHeader h;
  h.layout = Layout::temporal;
  h.d = 2;
  h.s = n * n;
  h.lr_shape = {T, n, n};
  h.hr_frames = 2;
  h.coord_min = {0.0, 0.0, 0.0};
  h.coord_max = {6.0, 6.0, 1.0};
  h.lr_t_max = 1.0;
  auto f = [](double x, double y, double t) { return x * y + 0.1 * x * x - y + t; };
  SampleRecord r;
  r.sensor_coords.resize(2 * n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      r.sensor_coords[i * n + j] = static_cast<float>(i);
      r.sensor_coords[n * n + i * n + j] = static_cast<float>(j);
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) r.lr_field.push_back(static_cast<float>(f(i, j, t)));
    }
  }
  const std::vector<std::pair<double, double>> q{{1.5, 2.25}, {3.0, 4.5}, {4.75, 1.0}};
  for (auto [x, y] : q) {
    r.query_coords.push_back(static_cast<float>(x));
    r.query_coords.push_back(static_cast<float>(y));
  }
  h.hr_query_count = q.size();
  const auto out = bicubic_grid(h, r);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < q.size(); ++k) {
      EXPECT_NEAR(out[t * q.size() + k], f(q[k].first, q[k].second, t), 1e-5);
    }
  }
}

TEST(BicubicGrid, SpacetimeDataIsContractError) {
  const auto [h, r] = scattered(10, 4, [](double, double) { return 1.0; }, 1);
  EXPECT_THROW(bicubic_grid(h, r), ContractError);
  EXPECT_THROW(baseline_interpolate(h, r, BaselineMethod::bicubic_grid), ContractError);
}

TEST(Idw, ReproducesConstants) {
  const auto [h, r] = scattered(30, 20, [](double, double) { return -0.75; }, 2);
  for (double v : idw_scattered(h, r)) EXPECT_NEAR(v, -0.75, 1e-6);
  const auto [h1, r1] = grid_1d(8, 4, 7, {0.1, 0.6}, [](double, double) { return 3.0; });
  for (double v : idw_scattered(h1, r1)) EXPECT_NEAR(v, 3.0, 1e-6);
}

TEST(Idw, ExactHitReturnsSensorValue) {
  auto [h, r] = scattered(12, 3, [](double x, double t) { return x * t; }, 3);
  r.query_coords[2] = r.sensor_coords[5];
  r.query_coords[3] = r.sensor_coords[12 + 5];
  const auto out = idw_scattered(h, r);
  EXPECT_EQ(out[1], static_cast<double>(r.lr_field[5]));
}

TEST(Idw, StaysWithinSensorRange) {
  const auto [h, r] = scattered(25, 50, [](double x, double t) { return std::sin(3 * x) + t; }, 4);
  const auto [lo, hi] = std::minmax_element(r.lr_field.begin(), r.lr_field.end());
  for (double v : idw_scattered(h, r)) {
    EXPECT_GE(v, *lo - 1e-9);
    EXPECT_LE(v, *hi + 1e-9);
  }
}

TEST(Idw, MatchesShepardFormula) {
  const auto [h, r] = scattered(6, 2, [](double x, double t) { return x - t; }, 5);
  const auto out = idw_scattered(h, r);
  for (std::size_t k = 0; k < 2; ++k) {
    const double qx = r.query_coords[2 * k], qt = r.query_coords[2 * k + 1] - 1.0;
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      const double dx = r.sensor_coords[j] - qx, dt = r.sensor_coords[6 + j] - 1.0 - qt;
      const double w = 1.0 / (dx * dx + dt * dt);
      num += w * r.lr_field[j];
      den += w;
    }
    EXPECT_NEAR(out[k], num / den, 1e-12);
  }
}

TEST(Baselines, NamesRoundTrip) {
  for (auto m : {BaselineMethod::bicubic_grid, BaselineMethod::idw_scattered}) {
    EXPECT_EQ(baseline_method_from_string(to_string(m)), m);
  }
  EXPECT_THROW(baseline_method_from_string("nearest"), ConfigError);
}
