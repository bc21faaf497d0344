#include <gtest/gtest.h>

#include <cmath>

#include "srop/adam.hpp"
#include "srop/errors.hpp"
#include "srop/tensor.hpp"

using namespace srop;

TEST(Adam, ZeroGradientLeavesEverythingUnchanged) {
  Tensor w({3}, {0.5, -1.0, 2.0}, true);
  std::vector<Tensor> params{w};
  auto state = make_adam_state(params, {});
  backward(scale(sum(w), 0.0));
  adam_step(params, state);
  EXPECT_EQ(w[0], 0.5);
  EXPECT_EQ(w[1], -1.0);
  EXPECT_EQ(w[2], 2.0);
  for (double m : state.first_moment[0]) EXPECT_EQ(m, 0.0);
  for (double v : state.second_moment[0]) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, FirstStepHandArithmetic) {
  Tensor w = Tensor::scalar(1.0, true);
  std::vector<Tensor> params{w};
  auto state = make_adam_state(params, {1e-3, 0.9, 0.999, 1e-8});
  backward(w);  // dL/dw = 1
  adam_step(params, state);
  // m_hat = 1, v_hat = 1, step = lr / (1 + eps)
  EXPECT_NEAR(1.0 - w.item(), 1e-3 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(1.0 - w.item(), 9.9999999e-4, 1e-15);
}

TEST(Adam, GradsClearedAndStepCountIncrements) {
  Tensor w({2}, {1.0, 2.0}, true);
  std::vector<Tensor> params{w};
  auto state = make_adam_state(params, {});
  for (std::uint64_t k = 1; k <= 3; ++k) {
    backward(sum(square(w)));
    adam_step(params, state);
    EXPECT_EQ(state.step_count, k);
    for (double g : w.grad()) EXPECT_EQ(g, 0.0);
  }
  ASSERT_EQ(state.first_moment.size(), 1u);
  EXPECT_EQ(state.first_moment[0].size(), w.numel());
  EXPECT_EQ(state.second_moment[0].size(), w.numel());
}

TEST(Adam, MissingGradIsContractError) {
  Tensor a = Tensor::scalar(1.0, true);
  Tensor b = Tensor::scalar(1.0, true);
  std::vector<Tensor> params{a, b};
  auto state = make_adam_state(params, {});
  backward(square(a));
  EXPECT_THROW(adam_step(params, state), ContractError);
}

TEST(Adam, MonotoneDescentOnQuadratic) {
  Tensor w = Tensor::scalar(1.0, true);
  std::vector<Tensor> params{w};
  auto state = make_adam_state(params, {1e-2, 0.9, 0.999, 1e-8});
  double prev = w.item() * w.item();
  for (int k = 0; k < 10; ++k) {
    backward(square(w));
    adam_step(params, state);
    const double f = w.item() * w.item();
    EXPECT_LT(f, prev) << "step " << k;
    prev = f;
  }
}

TEST(Adam, MatchesReferenceUpdateOverSeveralSteps) {
  const AdamOptions opt{0.05, 0.8, 0.99, 1e-6};
  Tensor w({2}, {0.7, -0.3}, true);
  std::vector<Tensor> params{w};
  auto state = make_adam_state(params, opt);
  double x[2] = {0.7, -0.3}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 5; ++t) {
    backward(sum(mul(square(w), Tensor({2}, {1.0, 3.0}))));
    adam_step(params, state);
    for (int i = 0; i < 2; ++i) {
      const double g = (i == 0 ? 2.0 : 6.0) * x[i];
      m[i] = opt.beta1 * m[i] + (1 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i] + (1 - opt.beta2) * g * g;
      const double mh = m[i] / (1 - std::pow(opt.beta1, t));
      const double vh = v[i] / (1 - std::pow(opt.beta2, t));
      x[i] -= opt.learning_rate * mh / (std::sqrt(vh) + opt.epsilon);
      EXPECT_NEAR(w[i], x[i], 1e-14);
    }
  }
}
