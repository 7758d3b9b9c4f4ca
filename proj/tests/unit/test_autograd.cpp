#include <gtest/gtest.h>

#include <cmath>

#include "dualfete/autograd.hpp"
#include "dualfete/error.hpp"
#include "dualfete/ops.hpp"
#include "dualfete/oracles/gradient_check.hpp"
#include "dualfete/rng.hpp"

using namespace dualfete;
using namespace dualfete::autograd;

namespace {

ModelParams one(const std::string& name, Tensor t) {
  ModelParams p;
  p.insert(name, std::move(t));
  return p;
}

Tensor random_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = uniform(rng, -1.0, 1.0);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST(Tensor, CopyOnWriteLeavesCopiesAlone) {
  Tensor a = Tensor::from({1, 2, 3});
  Tensor b = a;
  b.mutable_data()[0] = 9;
  EXPECT_EQ(a[0], 1);
  EXPECT_EQ(b[0], 9);
}

TEST(Ops, ReluOnSmallVector) {
  const Tensor r = relu(Tensor::from({-1, 0, 2}));
  EXPECT_EQ(r.values(), (std::vector<double>{0, 0, 2}));
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  const Tensor p = softmax_channels(Tensor::zeros({1, 2, 1, 1}));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Ops, MaskedSum) {
  EXPECT_EQ(masked_sum(Tensor::from({1, 2, 3}), Tensor::from({1, 0, 1})).item(), 4.0);
}

TEST(Ops, ShapeMismatchIsContractViolation) {
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), ContractViolation);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1, 1),
               ContractViolation);
}

TEST(Ops, StrideTwoConvHalvesResolution) {
  const Tensor y = conv2d(Tensor::zeros({2, 1, 8, 8}), Tensor::zeros({3, 1, 3, 3}), Tensor::zeros({3}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 3, 4, 4}));
}

TEST(Ops, ConvMatchesHandComputedValue) {
  // 3x3 all-ones kernel over a 3x3 ramp with zero padding: the centre sees every pixel.
  const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor y = conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0), Tensor::from({0.5}), 1, 1);
  EXPECT_DOUBLE_EQ(y[4], 45.5);
  EXPECT_DOUBLE_EQ(y[0], 1 + 2 + 4 + 5 + 0.5);
}

TEST(Ops, DropoutRateZeroIsIdentity) {
  const Tensor x = Tensor::from({1, -2, 3});
  EXPECT_TRUE(dropout(x, 0.0, 42).bitwise_equal(x));
}

TEST(Ops, DropoutIsSeeded) {
  Rng rng(1);
  const Tensor x = random_tensor(rng, {1, 4, 8, 8});
  EXPECT_TRUE(dropout(x, 0.5, 7).bitwise_equal(dropout(x, 0.5, 7)));
  EXPECT_FALSE(dropout(x, 0.5, 7).bitwise_equal(dropout(x, 0.5, 8)));
}

TEST(Backward, LinearCaseGivesInput) {
  const Tensor x = Tensor::from({1.5, -2, 0.25});
  Tape tape;
  const auto w = tape.watch(one("w", Tensor::from({3, 4, 5})));
  const auto g = tape.backward(sum(mul(w.at("w"), x)));
  EXPECT_EQ(g.at("w").values(), x.values());
}

TEST(Backward, DeadReluHasZeroGradient) {
  Tape tape;
  const auto w = tape.watch(one("w", Tensor::from({-1, -2, -0.5})));
  const auto g = tape.backward(mean(relu(w.at("w"))));
  for (double v : g.at("w").values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, UnusedLeafGetsZeros) {
  Tape tape;
  ModelParams p = one("a", Tensor::from({1, 2}));
  p.insert("b", Tensor::from({3}));
  const auto w = tape.watch(p);
  const auto g = tape.backward(sum(w.at("a")));
  EXPECT_EQ(g.at("b").values(), std::vector<double>{0.0});
}

TEST(Backward, TapeCanBeSweptTwice) {
  Tape tape;
  const auto w = tape.watch(one("w", Tensor::from({2, 3})));
  const Tensor loss = sum(mul(w.at("w"), w.at("w")));
  EXPECT_TRUE(tape.backward(loss).at("w").bitwise_equal(tape.backward(loss).at("w")));
}

TEST(Backward, IsLinearInTheLoss) {
  Rng rng(3);
  const ModelParams p = one("w", random_tensor(rng, {1, 2, 4, 4}));
  const Tensor k = random_tensor(rng, {2, 2, 3, 3});
  const double alpha = 0.7, beta = -1.3;
  auto l1 = [&](const ModelParams& q) { return mean(exp(mul_scalar(q.at("w"), 0.5))); };
  auto l2 = [&](const ModelParams& q) {
    return sum(softmax_channels(conv2d(q.at("w"), k, Tensor::zeros({2}), 1, 1)));
  };
  auto grad = [&](auto f) {
    Tape tape;
    return tape.backward(f(tape.watch(p)));
  };
  const auto g1 = grad(l1), g2 = grad(l2);
  const auto gc = grad([&](const ModelParams& q) { return add(mul_scalar(l1(q), alpha), mul_scalar(l2(q), beta)); });
  for (std::size_t i = 0; i < gc.at("w").size(); ++i)
    EXPECT_NEAR(gc.at("w")[i], alpha * g1.at("w")[i] + beta * g2.at("w")[i], 1e-10);
}

TEST(Backward, ClampedLogKeepsTheCrossEntropyGradient) {
  Tape tape;
  const auto w = tape.watch(one("p", Tensor::from({1.0 - 1e-15})));
  const auto g = tape.backward(clamped_log(w.at("p"), 1e-9, 1.0 - 1e-9));
  EXPECT_NEAR(g.at("p")[0], 1.0, 1e-9);
}

TEST(Backward, IsDeterministic) {
  const auto c = oracles::random_case(11);
  Tape t1, t2;
  EXPECT_TRUE(t1.backward(c.objective(t1.watch(c.params))).bitwise_equal(t2.backward(c.objective(t2.watch(c.params)))));
}

TEST(GradientCheck, RelativeErrorDenominator) {
  EXPECT_EQ(oracles::relative_error(1.0, 1.1), (1.1 - 1.0) / 1.1);
  EXPECT_DOUBLE_EQ(oracles::relative_error(0.0, 1e-12), 1e-12 / 1e-8);
}

TEST(GradientCheck, FlagsAWrongGradient) {
  const ModelParams p = one("w", Tensor::from({0.3, -0.4}));
  const auto rep = oracles::check_gradient(p, [](const ModelParams& q) { return sum(mul(q.at("w"), q.at("w"))); });
  EXPECT_LT(rep.max_rel_error, 1e-8);
  const auto bad = oracles::check_gradient(p, [](const ModelParams& q) {
    // Taped and plain evaluations disagree, so the analytic gradient is wrong.
    return q.at("w").requires_grad() ? sum(q.at("w")) : sum(mul(q.at("w"), q.at("w")));
  });
  EXPECT_GT(bad.max_rel_error, 0.5);
}

class RandomNetGradient : public ::testing::TestWithParam<int> {};

TEST_P(RandomNetGradient, MatchesFiniteDifferences) {
  const auto c = oracles::random_case(static_cast<std::uint64_t>(1000 + GetParam()));
  const auto rep = oracles::check_gradient(c.params, c.objective);
  EXPECT_LT(rep.max_rel_error, 1e-4) << c.description << " at " << rep.worst_param << "[" << rep.worst_index
                                     << "]: " << rep.worst_analytic << " vs " << rep.worst_numeric;
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomNetGradient, ::testing::Range(0, 6));

TEST(Params, AxpyStepZeroIsBitwiseIdentity) {
  const ModelParams p = one("w", Tensor::from({0.1, 0.2}));
  GradientVector g;
  g.insert("w", Tensor::from({5, 6}));
  EXPECT_TRUE(axpy_params(p, g, 0.0).bitwise_equal(p));
}

TEST(Params, AxpyArithmetic) {
  GradientVector g;
  g.insert("w", Tensor::from({1, 1}));
  EXPECT_EQ(axpy_params(one("w", Tensor::from({1, 2})), g, 0.5).at("w").values(), (std::vector<double>{0.5, 1.5}));
}

TEST(Params, AxpyRejectsMismatchedLayouts) {
  GradientVector g;
  g.insert("v", Tensor::from({1, 1}));
  EXPECT_THROW(axpy_params(one("w", Tensor::from({1, 2})), g, 0.5), ContractViolation);
}

TEST(Params, PlainSgdIsAxpy) {
  const ModelParams p = one("w", Tensor::from({1, -2, 3}));
  GradientVector g;
  g.insert("w", Tensor::from({0.5, 0.25, -1}));
  const auto r = sgd_step(p, g, zeros_like(p), 0.1, 0.0, 0.0);
  EXPECT_TRUE(r.params.bitwise_equal(axpy_params(p, g, 0.1)));
}

TEST(Params, MomentumAccumulates) {
  const ModelParams p = one("w", Tensor::from({0.0}));
  GradientVector g;
  g.insert("w", Tensor::from({1.0}));
  auto r = sgd_step(p, g, zeros_like(p), 1.0, 0.9, 0.0);
  r = sgd_step(r.params, g, r.velocity, 1.0, 0.9, 0.0);
  EXPECT_DOUBLE_EQ(r.velocity.at("w")[0], 1.9);
  EXPECT_DOUBLE_EQ(r.params.at("w")[0], -2.9);
}

TEST(Params, GradNormAndScaling) {
  GradientVector g;
  g.insert("a", Tensor::from({3}));
  g.insert("b", Tensor::from({4}));
  EXPECT_DOUBLE_EQ(grad_norm(g), 5.0);
  EXPECT_NEAR(grad_norm(scale_grads(g, 1.0 / grad_norm(g))), 1.0, 1e-12);
  EXPECT_EQ(grad_norm(scale_grads(g, 0.0)), 0.0);
  EXPECT_DOUBLE_EQ(dot(g, g), 25.0);
}
