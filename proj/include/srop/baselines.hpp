#pragma once

// Parameter-free interpolation baselines evaluated at a sample's query points.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srop/dataset.hpp"

namespace srop {

enum class BaselineMethod { bicubic_grid, idw_scattered };

const char* to_string(BaselineMethod method);
BaselineMethod baseline_method_from_string(const std::string& name);

/// Catmull-Rom cubic through uniformly spaced values at fractional index pos,
/// neighbours beyond either end clamped to the end values.
double catmull_rom(std::span<const double> values, double pos);

/// Separable Catmull-Rom on each LR frame, then linear in time onto the HR
/// frames (held constant past the last LR frame). Temporal layout only.
std::vector<double> bicubic_grid(const DatasetHeader& header, const SampleRecord& sample);

/// Shepard inverse-distance weighting, power 2, over every spacetime sensor
/// point in normalized coordinates.
std::vector<double> idw_scattered(const DatasetHeader& header, const SampleRecord& sample);

/// Predictions flattened like hr_targets.
std::vector<double> baseline_interpolate(const DatasetHeader& header, const SampleRecord& sample,
                                         BaselineMethod method);

}  // namespace srop
