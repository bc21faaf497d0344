#include "srop/adam.hpp"

#include <cmath>

#include "srop/errors.hpp"

namespace srop {

AdamState make_adam_state(const std::vector<Tensor>& params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw ContractError("adam_step: optimizer state tracks " +
                        std::to_string(state.first_moment.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(p) + " " +
                          shape_str(params[p].shape()) + " has no gradient");
    }
    if (state.first_moment[p].size() != params[p].numel()) {
      throw DimensionError("adam_step: moment size mismatch for parameter " + std::to_string(p));
    }
  }
  const auto& o = state.options;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].mutable_values();
    auto grad = params[p].grad();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
    params[p].zero_grad();
  }
}

}  // namespace srop
