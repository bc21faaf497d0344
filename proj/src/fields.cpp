#include "srop/fields.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "srop/errors.hpp"

namespace srop {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kFieldTag = "SROPFIELD1";

std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto v : shape) n *= v;
  return n;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("failed to write '" + path.string() + "'");
}

}  // namespace

void write_field(const Field& f, std::ostream& out) {
  if (f.values.size() != numel(f.shape)) {
    throw DimensionError("field '" + f.name + "': value count does not match its shape");
  }
  ordered_json h;
  h["format"] = kFieldTag;
  h["name"] = f.name;
  h["shape"] = f.shape;
  h["meta"] = f.meta;
  out << h.dump() << '\n';
  std::string buf(4 * f.values.size(), '\0');
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(f.values[i]);
    for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed to write field");
}

void write_field(const Field& f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_field(f, out);
}

Field read_field(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing field header at byte offset 0");
  ordered_json h;
  try {
    h = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("field header is not valid JSON: ") + e.what());
  }
  if (!h.is_object() || h.value("format", std::string{}) != kFieldTag) {
    throw FormatError("not a SROPFIELD1 file");
  }
  Field f;
  try {
    f.name = h.at("name").get<std::string>();
    f.shape = h.at("shape").get<std::vector<std::size_t>>();
    if (h.contains("meta")) f.meta = h.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad field header: ") + e.what());
  }
  const std::size_t n = numel(f.shape);
  std::string buf(4 * n, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != buf.size()) {
    throw FormatError("field '" + f.name + "' truncated at byte offset " +
                      std::to_string(line.size() + 1 + got) + " (expected " +
                      std::to_string(buf.size()) + " data bytes)");
  }
  f.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[4 * i + b])) << (8 * b);
    }
    f.values[i] = std::bit_cast<float>(bits);
  }
  return f;
}

Field read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open field file '" + path.string() + "'");
  return read_field(in);
}

Field error_field(const Field& a, const Field& b) {
  if (a.shape != b.shape) {
    throw DimensionError("error panel: fields '" + a.name + "' and '" + b.name +
                         "' have different shapes");
  }
  Field e;
  e.name = "error";
  e.shape = a.shape;
  e.values.resize(a.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    e.values[i] = std::abs(a.values[i] - b.values[i]);
  }
  return e;
}

std::vector<std::uint8_t> to_gray(std::span<const float> values, double lo, double hi) {
  std::vector<std::uint8_t> px(values.size(), 128);
  if (!(hi > lo)) return px;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double g = std::round((values[i] - lo) / (hi - lo) * 255.0);
    px[i] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
  }
  return px;
}

std::string pgm_bytes(std::size_t width, std::size_t height,
                      std::span<const std::uint8_t> pixels) {
  if (pixels.size() != width * height) throw DimensionError("PGM: pixel count mismatch");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

std::string csv_grid(std::span<const float> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) throw DimensionError("CSV: value count mismatch");
  std::string out;
  char buf[32];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(values[r * cols + c]));
      out += buf;
      out += c + 1 < cols ? ',' : '\n';
    }
  }
  return out;
}

std::vector<float> parse_csv_grid(const std::string& text, std::size_t& rows, std::size_t& cols) {
  std::vector<float> out;
  rows = 0;
  cols = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t n = 0;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      char* end = nullptr;
      const float v = std::strtof(cell.c_str(), &end);
      if (end == cell.c_str()) throw FormatError("CSV: bad number '" + cell + "'");
      out.push_back(v);
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw FormatError("CSV: ragged row " + std::to_string(rows));
    ++rows;
  }
  return out;
}

PlotResult plot_field(const Field& f, const std::filesystem::path& dir, const std::string& stem,
                      bool error_panel) {
  if (f.shape.size() != 2 && f.shape.size() != 3) {
    throw DimensionError("plot: fields must have rank 2 or 3");
  }
  if (f.values.size() != numel(f.shape)) throw FormatError("plot: field data is short");
  std::filesystem::create_directories(dir);
  PlotResult res;
  double lo = 0.0, hi = 0.0;
  if (!f.values.empty()) {
    const auto [mn, mx] = std::minmax_element(f.values.begin(), f.values.end());
    lo = *mn;
    hi = *mx;
  }
  if (error_panel) lo = 0.0;
  res.min = lo;
  res.max = hi;
  res.degenerate = !(hi > lo);

  auto emit = [&](std::span<const float> values, std::size_t rows, std::size_t cols,
                  const std::string& name) {
    std::vector<std::uint8_t> px;
    if (error_panel && res.degenerate) {
      px.assign(values.size(), 0);
    } else {
      px = to_gray(values, lo, hi);
    }
    const auto img = dir / (name + ".pgm");
    const auto csv = dir / (name + ".csv");
    write_text(img, pgm_bytes(cols, rows, px));
    write_text(csv, csv_grid(values, rows, cols));
    res.images.push_back(img);
    res.csvs.push_back(csv);
  };
  if (f.shape.size() == 2) {
    emit(f.values, f.shape[0], f.shape[1], stem);
  } else {
    const std::size_t frame = f.shape[1] * f.shape[2];
    char suffix[32];
    for (std::size_t t = 0; t < f.shape[0]; ++t) {
      std::snprintf(suffix, sizeof suffix, "_frame%04zu", t);
      emit(std::span<const float>(f.values).subspan(t * frame, frame), f.shape[1], f.shape[2],
           stem + suffix);
    }
  }
  ordered_json side;
  side["field"] = f.name;
  side["shape"] = f.shape;
  side["panel"] = error_panel ? "error" : "field";
  side["min"] = lo;
  side["max"] = hi;
  side["degenerate"] = res.degenerate;
  side["degenerate_gray"] = error_panel ? 0 : 128;
  ordered_json imgs = ordered_json::array();
  for (const auto& p : res.images) imgs.push_back(p.filename().string());
  side["images"] = imgs;
  res.sidecar = dir / (stem + ".json");
  write_text(res.sidecar, side.dump(2) + "\n");
  return res;
}

}  // namespace srop
