#include "srop/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "srop/errors.hpp"

namespace srop {

const char* to_string(BaselineMethod method) {
  return method == BaselineMethod::bicubic_grid ? "bicubic_grid" : "idw_scattered";
}

BaselineMethod baseline_method_from_string(const std::string& name) {
  if (name == "bicubic_grid") return BaselineMethod::bicubic_grid;
  if (name == "idw_scattered") return BaselineMethod::idw_scattered;
  throw ConfigError("unknown baseline '" + name + "' (expected bicubic_grid or idw_scattered)");
}

namespace {

struct Stencil {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

Stencil catmull_rom_stencil(std::size_t n, double pos) {
  if (n == 0) throw ContractError("catmull_rom: no values");
  Stencil st{};
  if (n == 1) {
    st.index = {0, 0, 0, 0};
    st.weight = {0.0, 1.0, 0.0, 0.0};
    return st;
  }
  const double hi = static_cast<double>(n - 1);
  pos = std::clamp(pos, 0.0, hi);
  auto i = static_cast<std::size_t>(std::floor(pos));
  if (i > n - 2) i = n - 2;
  const double s = pos - static_cast<double>(i);
  const double s2 = s * s, s3 = s2 * s;
  auto clampi = [n](std::ptrdiff_t k) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  const auto ii = static_cast<std::ptrdiff_t>(i);
  st.index = {clampi(ii - 1), clampi(ii), clampi(ii + 1), clampi(ii + 2)};
  st.weight = {0.5 * (-s + 2.0 * s2 - s3), 0.5 * (2.0 - 5.0 * s2 + 3.0 * s3),
               0.5 * (s + 4.0 * s2 - 3.0 * s3), 0.5 * (-s2 + s3)};
  return st;
}

double grid_pos(double v, double lo, double hi, std::size_t n) {
  if (n < 2 || hi == lo) return 0.0;
  return (v - lo) / (hi - lo) * static_cast<double>(n - 1);
}

double frame_time(double t0, double t1, std::size_t i, std::size_t frames) {
  if (frames < 2) return t0;
  return t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(frames - 1);
}

double normalized(const DatasetHeader& h, std::size_t axis, double v) {
  return 2.0 * (v - h.coord_min[axis]) / (h.coord_max[axis] - h.coord_min[axis]) - 1.0;
}

/// Weighted average over points [P x dim] with values; exact hit short-circuits.
double shepard(std::span<const double> points, std::span<const double> values, std::size_t dim,
               std::span<const double> q) {
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) {
    double d2 = 0.0;
    for (std::size_t a = 0; a < dim; ++a) {
      const double diff = points[p * dim + a] - q[a];
      d2 += diff * diff;
    }
    if (std::sqrt(d2) < 1e-12) return values[p];
    const double w = 1.0 / d2;
    num += w * values[p];
    den += w;
  }
  return num / den;
}

}  // namespace

double catmull_rom(std::span<const double> values, double pos) {
  const auto st = catmull_rom_stencil(values.size(), pos);
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) acc += st.weight[k] * values[st.index[k]];
  return acc;
}

std::vector<double> bicubic_grid(const DatasetHeader& h, const SampleRecord& r) {
  if (h.layout != Layout::temporal) {
    throw ContractError("bicubic_grid needs low-resolution data on a regular grid");
  }
  const std::size_t T = h.lr_shape.at(0);
  const std::size_t s = h.s;
  const std::size_t m = h.hr_query_count;
  const std::size_t d = h.d;
  const auto& sc = r.sensor_coords;

  // Spatial interpolation of every LR frame at every query.
  std::vector<double> spatial(T * m);
  if (d == 1) {
    const double lo = sc.front(), hi = sc[s - 1];
    for (std::size_t q = 0; q < m; ++q) {
      const auto st = catmull_rom_stencil(s, grid_pos(r.query_coords[q], lo, hi, s));
      for (std::size_t t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += st.weight[k] * r.lr_field[t * s + st.index[k]];
        spatial[t * m + q] = acc;
      }
    }
  } else {
    const std::size_t n1 = h.lr_shape.at(1), n2 = h.lr_shape.at(2);
    const double lo1 = sc[0], hi1 = sc[(n1 - 1) * n2];
    const double lo2 = sc[s], hi2 = sc[s + n2 - 1];
    for (std::size_t q = 0; q < m; ++q) {
      const auto s1 = catmull_rom_stencil(n1, grid_pos(r.query_coords[2 * q], lo1, hi1, n1));
      const auto s2 = catmull_rom_stencil(n2, grid_pos(r.query_coords[2 * q + 1], lo2, hi2, n2));
      for (std::size_t t = 0; t < T; ++t) {
        const float* frame = r.lr_field.data() + t * s;
        double acc = 0.0;
        for (int a = 0; a < 4; ++a) {
          double row = 0.0;
          for (int b = 0; b < 4; ++b) row += s2.weight[b] * frame[s1.index[a] * n2 + s2.index[b]];
          acc += s1.weight[a] * row;
        }
        spatial[t * m + q] = acc;
      }
    }
  }

  // Linear interpolation in time onto the HR frames.
  const std::size_t F = h.hr_frames;
  std::vector<double> out(F * m);
  const double t0 = h.t_min();
  for (std::size_t i = 0; i < F; ++i) {
    const double t = frame_time(t0, h.t_max(), i, F);
    double pos = T < 2 ? 0.0 : grid_pos(t, t0, h.lr_t_max, T);
    pos = std::clamp(pos, 0.0, static_cast<double>(T - 1));
    std::size_t j = static_cast<std::size_t>(std::floor(pos));
    if (T >= 2 && j > T - 2) j = T - 2;
    const double w = T < 2 ? 0.0 : pos - static_cast<double>(j);
    for (std::size_t q = 0; q < m; ++q) {
      const double a = spatial[j * m + q];
      const double b = T < 2 ? a : spatial[(j + 1) * m + q];
      out[i * m + q] = (1.0 - w) * a + w * b;
    }
  }
  return out;
}

std::vector<double> idw_scattered(const DatasetHeader& h, const SampleRecord& r) {
  const std::size_t dim = h.d + 1;
  const std::size_t s = h.s;
  const std::size_t m = h.hr_query_count;
  std::vector<double> points;
  std::vector<double> values;
  std::vector<double> out;
  if (h.layout == Layout::spacetime) {
    points.resize(s * dim);
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t a = 0; a < dim; ++a) {
        points[j * dim + a] = normalized(h, a, r.sensor_coords[a * s + j]);
      }
    }
    values.assign(r.lr_field.begin(), r.lr_field.end());
    out.resize(m);
    std::vector<double> q(dim);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t a = 0; a < dim; ++a) q[a] = normalized(h, a, r.query_coords[k * dim + a]);
      out[k] = shepard(points, values, dim, q);
    }
    return out;
  }
  const std::size_t T = h.lr_shape.at(0);
  points.reserve(T * s * dim);
  for (std::size_t t = 0; t < T; ++t) {
    const double tv = normalized(h, h.d, frame_time(h.t_min(), h.lr_t_max, t, T));
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t a = 0; a < h.d; ++a) {
        points.push_back(normalized(h, a, r.sensor_coords[a * s + j]));
      }
      points.push_back(tv);
    }
  }
  values.assign(r.lr_field.begin(), r.lr_field.end());
  const std::size_t F = h.hr_frames;
  out.resize(F * m);
  std::vector<double> q(dim);
  for (std::size_t i = 0; i < F; ++i) {
    q[h.d] = normalized(h, h.d, frame_time(h.t_min(), h.t_max(), i, F));
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t a = 0; a < h.d; ++a) {
        q[a] = normalized(h, a, r.query_coords[k * h.d + a]);
      }
      out[i * m + k] = shepard(points, values, dim, q);
    }
  }
  return out;
}

std::vector<double> baseline_interpolate(const DatasetHeader& header, const SampleRecord& sample,
                                         BaselineMethod method) {
  return method == BaselineMethod::bicubic_grid ? bicubic_grid(header, sample)
                                                : idw_scattered(header, sample);
}

}  // namespace srop
