#pragma once

// Field files written by `predict` and the PGM/CSV emission of `plot`.
//
// Field file: one JSON header line {"format": "SROPFIELD1", "name", "shape",
// "meta"} then the values as little-endian float32, row-major.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace srop {

struct Field {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

void write_field(const Field& field, std::ostream& out);
void write_field(const Field& field, const std::filesystem::path& path);
Field read_field(std::istream& in);
Field read_field(const std::filesystem::path& path);

/// |a - b| elementwise; shapes must agree.
Field error_field(const Field& a, const Field& b);

/// 8-bit gray levels, linear from lo (0) to hi (255). lo == hi maps to 128.
std::vector<std::uint8_t> to_gray(std::span<const float> values, double lo, double hi);
/// Binary PGM (P5, maxval 255).
std::string pgm_bytes(std::size_t width, std::size_t height, std::span<const std::uint8_t> pixels);

std::string csv_grid(std::span<const float> values, std::size_t rows, std::size_t cols);
/// Parses a CSV grid written by csv_grid back into row-major values.
std::vector<float> parse_csv_grid(const std::string& text, std::size_t& rows, std::size_t& cols);

struct PlotResult {
  std::vector<std::filesystem::path> images;
  std::vector<std::filesystem::path> csvs;
  std::filesystem::path sidecar;
  double min = 0.0;
  double max = 0.0;
  bool degenerate = false;
};

/// Writes `<stem>*.pgm`, `<stem>*.csv` and `<stem>.json` into dir. Rank-2 fields
/// become one image (rows = frames); rank-3 fields one image per frame.
/// Error panels scale from 0 to the maximum, so an all-zero error is black.
PlotResult plot_field(const Field& field, const std::filesystem::path& dir,
                      const std::string& stem, bool error_panel = false);

}  // namespace srop
