#pragma once

// Low/high-resolution sample generation for every experiment family and the
// SROP1 dataset file format.
//
// SROP1 layout: one UTF-8 JSON header line terminated by '\n', then for each
// sample in index order: params, sensor_coords, lr_field, query_coords,
// hr_targets, each as raw little-endian IEEE-754 float32 values in row-major
// order. All lengths follow from the header.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srop/pde.hpp"

namespace srop {

enum class Problem { exp1, exp2, exp3, diff2d, diff2d_var, forced2d };
enum class Layout { spacetime, temporal };

const char* to_string(Problem problem);
Problem problem_from_string(const std::string& name);
const char* to_string(Layout layout);
Layout layout_from_string(const std::string& name);
const char* to_string(LrMode mode);
LrMode lr_mode_from_string(const std::string& name);

using Range = std::pair<double, double>;

struct DatasetConfig {
  Problem problem = Problem::exp1;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  LrMode lr_mode = LrMode::coarse_solve;

  // Grid families. Zero picks the family default; LR resolution = HR / factor.
  std::size_t hr_nx = 0;
  std::size_t hr_nt = 0;
  std::size_t space_factor = 0;
  std::size_t time_factor = 0;
  /// Keep only the first N low-resolution frames (partial input). 0 keeps all.
  std::size_t lr_keep_frames = 0;

  // Random-location family (exp3). Zero picks the default.
  std::size_t sensors = 0;
  std::size_t sensor_frames = 0;
  std::size_t queries = 0;
  std::size_t query_frames = 0;

  std::optional<Range> alpha_range;
  std::optional<Range> beta_range;
  std::optional<Range> diffusion_range;
};

/// Fills every zero/unset field of `config` with the family defaults.
DatasetConfig with_defaults(DatasetConfig config);

struct DatasetHeader {
  std::string family;
  Layout layout = Layout::temporal;
  std::size_t n_samples = 0;
  std::size_t s = 0;
  std::vector<std::size_t> lr_shape;
  std::size_t hr_query_count = 0;
  std::size_t hr_frames = 1;
  std::size_t d = 1;
  std::vector<std::string> param_names;
  std::uint64_t seed = 0;
  std::string lr_mode;
  /// Per-axis bounds, spatial axes first then time.
  std::vector<double> coord_min;
  std::vector<double> coord_max;
  /// Time span covered by the low-resolution frames (shorter for partial input).
  double lr_t_max = 0.0;

  std::size_t sensor_rows() const { return layout == Layout::spacetime ? d + 1 : d; }
  std::size_t query_cols() const { return layout == Layout::spacetime ? d + 1 : d; }
  std::size_t params_len() const { return param_names.size(); }
  std::size_t sensor_len() const { return sensor_rows() * s; }
  std::size_t lr_len() const;
  std::size_t query_len() const { return hr_query_count * query_cols(); }
  std::size_t target_len() const { return hr_frames * hr_query_count; }
  double t_min() const { return coord_min.back(); }
  double t_max() const { return coord_max.back(); }
};

struct SampleRecord {
  std::vector<float> params;
  std::vector<float> sensor_coords;  // [rows x s]
  std::vector<float> lr_field;       // lr_shape
  std::vector<float> query_coords;   // [M x cols]
  std::vector<float> hr_targets;     // [hr_frames x M]
};

struct Dataset {
  DatasetHeader header;
  std::vector<SampleRecord> samples;

  double param(std::size_t sample, const std::string& name) const;
};

/// Initial and boundary data, forcing and domain of one grid-family sample.
struct GridProblem {
  enum class Init { zero, intervals, disks, exp3_exact };

  std::size_t dims = 1;
  Domain1D domain1;
  Domain2D domain2;
  ForcingSpec forcing;
  Init init = Init::zero;
  std::vector<Interval> intervals;
  std::vector<Disk> disks;

  /// Rasterized initial state on an n-node (1D) or n x n (2D) grid.
  std::vector<double> initial_state(std::size_t n) const;
  /// Solution frames [nt x n (x n)].
  std::vector<double> solve(std::size_t n, std::size_t nt) const;
};

/// Low-resolution field from a high-resolution solution of `problem`.
/// hr_shape is [nt, n] or [nt, n, n]; factors are {time, space}.
std::vector<double> make_lr(const GridProblem& problem, std::span<const double> hr_field,
                            std::span<const std::size_t> hr_shape, LrMode mode,
                            std::size_t time_factor, std::size_t space_factor);

Dataset generate_dataset(const DatasetConfig& config);

void write_dataset(const Dataset& dataset, std::ostream& out);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

/// Generates and writes in one go.
void build_dataset(const DatasetConfig& config, const std::filesystem::path& path);

/// Checks finiteness, in-domain coordinates and record sizes.
void validate_dataset(const Dataset& dataset);

/// Forcing and diffusion coefficient of a stored sample.
ForcingSpec sample_forcing(const Dataset& dataset, std::size_t sample);
double sample_diffusion(const Dataset& dataset, std::size_t sample);

/// Worker threads for embarrassingly parallel loops (SROP_THREADS caps it).
std::size_t worker_threads();

}  // namespace srop
