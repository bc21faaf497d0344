#pragma once

#include <cstdint>
#include <vector>

#include "srop/tensor.hpp"

namespace srop {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter moment accumulators and the shared step counter.
struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;
  AdamOptions options;
};

AdamState make_adam_state(const std::vector<Tensor>& params, AdamOptions options);

/// Bias-corrected Adam update of every tracked parameter, then clears the grads.
/// A tracked parameter without a grad is a ContractError.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace srop
