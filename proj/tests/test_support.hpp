#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "srop/tensor.hpp"

namespace srop::testing {

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between autodiff gradients and central finite
/// differences of `loss` over every entry of every leaf in `leaves`.
inline double gradcheck(std::vector<Tensor>& leaves, const std::function<Tensor()>& loss,
                        double h = 1e-6, double floor = 1e-6) {
  for (auto& p : leaves) p.zero_grad();
  backward(loss());
  std::vector<std::vector<double>> analytic;
  for (auto& p : leaves) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }
  double worst = 0.0;
  NoGradGuard guard;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto v = leaves[l].mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x0 = v[i];
      v[i] = x0 + h;
      const double fp = loss().item();
      v[i] = x0 - h;
      const double fm = loss().item();
      v[i] = x0;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[l][i], fd, floor));
    }
  }
  return worst;
}

inline Tensor random_tensor(std::mt19937_64& gen, Shape shape, bool requires_grad = true,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(gen);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

/// Fixed weights for a scalar loss that mixes every output entry.
inline Tensor mixing_weights(std::mt19937_64& gen, const Shape& shape) {
  return random_tensor(gen, shape, false, 0.5, 1.5);
}

inline Tensor weighted_sum(const Tensor& t, const Tensor& w) { return sum(mul(t, w)); }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("srop_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::filesystem::path test_data_dir() {
  if (const char* dir = std::getenv("SROP_TEST_DATA_DIR")) return dir;
#ifdef SROP_TEST_DATA_DIR
  return SROP_TEST_DATA_DIR;
#else
  return "tests/data";
#endif
}

}  // namespace srop::testing
