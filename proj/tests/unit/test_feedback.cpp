#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "dualfete/autograd.hpp"
#include "dualfete/feedback.hpp"
#include "dualfete/losses.hpp"
#include "dualfete/ops.hpp"
#include "dualfete/oracles/bilevel_oracle.hpp"
#include "dualfete/oracles/taylor_check.hpp"
#include "dualfete/synthdata.hpp"

using namespace dualfete;
using namespace dualfete::feedback;
using autograd::Tensor;
using pseudo::PixelMask;
namespace ag = dualfete::autograd;

namespace {

segnet::NetConfig tiny_net() {
  segnet::NetConfig n;
  n.height = n.width = 8;
  n.base_channels = 2;
  n.depth = 1;
  return n;
}

LabelMap labels_of(std::span<const data::SegSample> s) {
  LabelMap out(s.size(), s[0].height, s[0].width);
  for (std::size_t b = 0; b < s.size(); ++b)
    std::copy(s[b].label.begin(), s[b].label.end(), out.values.begin() + b * out.plane());
  return out;
}

LabeledBatch batch_of(std::span<const data::SegSample> s) { return {data::stack_images(s), labels_of(s)}; }

// Two-class maps whose class-1 probability is given per pixel.
Tensor binary_probs(std::size_t b, std::size_t h, std::size_t w, std::function<double(std::size_t)> p1) {
  std::vector<double> v(b * 2 * h * w);
  const std::size_t plane = h * w;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const double p = p1(n * plane + i);
      v[(n * 2) * plane + i] = 1.0 - p;
      v[(n * 2 + 1) * plane + i] = p;
    }
  return Tensor({b, 2, h, w}, std::move(v));
}

ModelParams uniform_output_net(const segnet::NetConfig& n, std::uint64_t seed) {
  ModelParams p = segnet::build(n, seed);
  for (double& v : p.at("head.w").mutable_data()) v = 0.0;
  for (double& v : p.at("head.b").mutable_data()) v = 0.0;
  return p;
}

}  // namespace

TEST(Losses, PerfectPredictionIsNearlyFree) {
  LabelMap y(1, 2, 2);
  y.values = {0, 1, 1, 0};
  const Tensor p = binary_probs(1, 2, 2, [&](std::size_t i) { return y[i] == 1 ? 1.0 : 0.0; });
  EXPECT_LT(loss::cross_entropy(p, y).item(), 1e-6);
  EXPECT_LT(loss::seg_loss(p, y).item(), 1e-6);
}

TEST(Losses, EmptyMaskGivesZeroWithoutGradient) {
  LabelMap y(1, 2, 2);
  const PixelMask empty(1, 2, 2);
  ag::Tape tape;
  ModelParams p;
  p.insert("p", binary_probs(1, 2, 2, [](std::size_t) { return 0.3; }));
  const auto w = tape.watch(p);
  const Tensor l = loss::seg_loss(w.at("p"), y, &empty);
  EXPECT_EQ(l.item(), 0.0);
  const auto grads = tape.backward(l);
  for (double g : grads.at("p").values()) EXPECT_EQ(g, 0.0);
}

TEST(Losses, UniformLikelihoodIsLogHalf) {
  LabelMap y(1, 3, 3);
  y.values = {0, 1, 0, 1, 1, 0, 0, 0, 1};
  PixelMask m(1, 3, 3);
  m.values = {1, 0, 1, 0, 0, 1, 1, 0, 0};
  const Tensor p = binary_probs(1, 3, 3, [](std::size_t) { return 0.5; });
  EXPECT_NEAR(loss::masked_log_likelihood(p, y, &m).item(), std::log(0.5), 1e-15);
  EXPECT_NEAR(loss::masked_log_likelihood(p, y, &m, loss::Reduction::Sum).item(), 4 * std::log(0.5), 1e-14);
}

TEST(Losses, CertainLikelihoodIsNearlyZero) {
  LabelMap y(1, 2, 2);
  y.values = {1, 1, 0, 1};
  const Tensor p = binary_probs(1, 2, 2, [&](std::size_t i) { return y[i] == 1 ? 1.0 : 0.0; });
  EXPECT_NEAR(loss::masked_log_likelihood(p, y, nullptr).item(), 0.0, 1e-8);
}

TEST(Losses, SoftTargetsReduceToHardOnOneHots) {
  LabelMap y(1, 2, 3);
  y.values = {0, 1, 1, 0, 1, 0};
  const Tensor p = binary_probs(1, 2, 3, [](std::size_t i) { return 0.1 + 0.15 * static_cast<double>(i); });
  const Tensor t = binary_probs(1, 2, 3, [&](std::size_t i) { return static_cast<double>(y[i]); });
  EXPECT_NEAR(loss::cross_entropy_soft(p, t).item(), loss::cross_entropy(p, y).item(), 1e-14);
  EXPECT_NEAR(loss::seg_loss_soft(p, t).item(), loss::seg_loss(p, y).item(), 1e-14);
}

TEST(LabeledLoss, UniformNetScoresLnTwo) {
  const auto n = tiny_net();
  const auto s = data::generate_dataset(1, 3, 8, 8, 0.5);
  EXPECT_NEAR(labeled_loss(uniform_output_net(n, 1), n, batch_of(s)), std::log(2.0), 1e-12);
}

TEST(FeedbackSingle, ZeroDeltaIsInert) {
  const auto n = tiny_net();
  const auto s = data::generate_dataset(2, 2, 8, 8, 0.5);
  ag::Tape tape;
  const Tensor l = feedback_loss_single(tape.watch(segnet::build(n, 3)), n, data::stack_images(s), 0.0);
  EXPECT_EQ(l.item(), 0.0);
  for (const auto& [name, g] : tape.backward(l))
    for (double v : g.values()) EXPECT_EQ(v, 0.0) << name;
}

class FeedbackSign : public ::testing::TestWithParam<double> {};

TEST_P(FeedbackSign, StepMovesLikelihoodWithDelta) {
  const double delta = GetParam();
  const auto n = tiny_net();
  const auto s = data::generate_dataset(4, 2, 8, 8, 0.5);
  const Tensor x = data::stack_images(s);
  const ModelParams teacher = segnet::build(n, 8);
  const auto labels = pseudo::argmax_label(segnet::forward(teacher, n, x));
  auto ll = [&](const ModelParams& p) { return loss::masked_log_likelihood(segnet::forward(p, n, x), labels, nullptr).item(); };
  ag::Tape tape;
  const Tensor probs = segnet::forward(tape.watch(teacher), n, x);
  const auto g = tape.backward(feedback_loss_single(probs, labels, delta));
  const double moved = ll(ag::axpy_params(teacher, g, 1e-3)) - ll(teacher);
  EXPECT_GT(moved * delta, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Deltas, FeedbackSign, ::testing::Values(0.2, -0.2));

TEST(FeedbackDual, ZeroDeltasOrEmptyMasksGiveZero) {
  LabelMap y(1, 2, 2);
  y.values = {0, 1, 1, 0};
  const Tensor p = binary_probs(1, 2, 2, [](std::size_t i) { return 0.2 + 0.2 * static_cast<double>(i); });
  PixelMask full(1, 2, 2, 1), empty(1, 2, 2);
  EXPECT_EQ(feedback_loss_dual(p, y, FeedbackSignal{}, full, full).item(), 0.0);
  EXPECT_EQ(feedback_loss_dual(p, y, FeedbackSignal{0.7, -0.3}, empty, empty).item(), 0.0);
}

TEST(FeedbackDual, IsLinearInEachDelta) {
  LabelMap y(1, 2, 2);
  y.values = {0, 1, 1, 0};
  const Tensor p = binary_probs(1, 2, 2, [](std::size_t i) { return 0.2 + 0.2 * static_cast<double>(i); });
  PixelMask a(1, 2, 2), d(1, 2, 2);
  a.values = {1, 1, 0, 0};
  d.values = {0, 0, 1, 1};
  const double base_a = feedback_loss_dual(p, y, {0.3, 0.0}, a, d).item();
  EXPECT_EQ(feedback_loss_dual(p, y, {0.6, 0.0}, a, d).item(), 2.0 * base_a);
  const double base_d = feedback_loss_dual(p, y, {0.0, -0.25}, a, d).item();
  EXPECT_EQ(feedback_loss_dual(p, y, {0.0, -0.5}, a, d).item(), 2.0 * base_d);
  EXPECT_NEAR(feedback_loss_dual(p, y, {0.3, -0.25}, a, d).item(), base_a + base_d, 1e-15);
}

TEST(FeedbackDual, EachDeltaSteersItsOwnReceiver) {
  const auto n = tiny_net();
  const auto s = data::generate_dataset(6, 2, 8, 8, 0.5);
  const Tensor x = data::stack_images(s);
  const ModelParams teacher = segnet::build(n, 10);
  const auto labels = pseudo::argmax_label(segnet::forward(teacher, n, x));
  PixelMask a(2, 8, 8), d(2, 8, 8);
  for (std::size_t i = 0; i < a.size(); ++i) (i % 3 == 0 ? d : a)[i] = 1;
  for (const FeedbackSignal sig : {FeedbackSignal{0.4, 0.0}, FeedbackSignal{-0.4, 0.0}, FeedbackSignal{0.0, 0.4},
                                   FeedbackSignal{0.0, -0.4}}) {
    const PixelMask& receiver = sig.delta_agree != 0.0 ? a : d;
    const double delta = sig.delta_agree + sig.delta_disagree;
    ag::Tape tape;
    const auto g = tape.backward(feedback_loss_dual(segnet::forward(tape.watch(teacher), n, x), labels, sig, a, d));
    // Directional derivative of the receiver's log-likelihood along -grad.
    ag::Tape t2;
    const auto gll = t2.backward(loss::masked_log_likelihood(segnet::forward(t2.watch(teacher), n, x), labels, &receiver));
    EXPECT_GT(-ag::dot(gll, g) * delta, 0.0);
  }
}

TEST(Probe, EmptyAttributorGivesZeroDelta) {
  const auto n = tiny_net();
  const auto s = data::generate_dataset(7, 4, 8, 8, 0.5);
  const std::span<const data::SegSample> all(s);
  const auto r = probe_delta(segnet::build(n, 1), n, batch_of(all.subspan(0, 2)), data::stack_images(all.subspan(2)),
                             labels_of(all.subspan(2)), PixelMask(2, 8, 8), 0.05, true);
  EXPECT_EQ(r.delta, 0.0);
}

TEST(Probe, LeavesTheStudentUntouched) {
  const auto n = tiny_net();
  const auto s = data::generate_dataset(7, 4, 8, 8, 0.5);
  const std::span<const data::SegSample> all(s);
  const ModelParams student = segnet::build(n, 1);
  const ModelParams copy = student;
  probe_delta(student, n, batch_of(all.subspan(0, 2)), data::stack_images(all.subspan(2)), labels_of(all.subspan(2)),
              PixelMask(2, 8, 8, 1), 0.05, true);
  EXPECT_TRUE(student.bitwise_equal(copy));
}

TEST(Probe, DeltaOverEtaConverges) {
  const auto n = tiny_net();
  const auto s = data::generate_dataset(8, 4, 8, 8, 0.5);
  const std::span<const data::SegSample> all(s);
  const ModelParams student = segnet::build(n, 2);
  auto ratio = [&](double eta) {
    return probe_delta(student, n, batch_of(all.subspan(0, 2)), data::stack_images(all.subspan(2)),
                       labels_of(all.subspan(2)), PixelMask(2, 8, 8, 1), eta, true).delta / eta;
  };
  const double coarse = ratio(1e-3), fine = ratio(1e-4);
  EXPECT_LT(std::abs(coarse - fine), 0.05 * std::abs(fine));
}

TEST(Probe, CorrectLabelsUsuallyHelp) {
  const auto n = tiny_net();
  int helped = 0;
  constexpr int kTrials = 100;
  for (int t = 0; t < kTrials; ++t) {
    const auto s = data::generate_dataset(1000 + t, 6, 8, 8, 0.3);
    const std::span<const data::SegSample> all(s);
    const auto r = probe_delta(segnet::build(n, 500 + t), n, batch_of(all.subspan(0, 3)),
                               data::stack_images(all.subspan(3)), labels_of(all.subspan(3)), PixelMask(3, 8, 8, 1),
                               1e-3, true);
    helped += r.delta > 0.0;
  }
  EXPECT_GE(helped, 90);
}

TEST(Probe, LossChangeMapSumsToDelta) {
  const auto n = tiny_net();
  const auto s = data::generate_dataset(9, 4, 8, 8, 0.5);
  const std::span<const data::SegSample> all(s);
  const ModelParams student = segnet::build(n, 3);
  const auto lb = batch_of(all.subspan(0, 2));
  const auto g = attributor_gradient(student, n, data::stack_images(all.subspan(2)), labels_of(all.subspan(2)),
                                     PixelMask(2, 8, 8, 1));
  const auto map = loss_change_map(student, n, lb, g, 0.05, true);
  double mean = 0.0;
  for (double v : map) mean += v;
  mean /= static_cast<double>(map.size());
  EXPECT_NEAR(mean, probe_along(student, n, lb, g, 0.05, true).delta, 1e-12);
}

TEST(TaylorOracle, ResidualShrinksQuadratically) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto inst = oracles::taylor_instance(seed);
    EXPECT_GE(inst.min_order(), 1.8) << "seed " << seed;
    EXPECT_TRUE(std::is_sorted(inst.residuals.rbegin(), inst.residuals.rend()));
  }
}

TEST(TaylorOracle, NormalizedProbeAlsoConverges) {
  EXPECT_GE(oracles::taylor_instance(4, true).min_order(), 1.8);
}

TEST(BilevelOracle, ZeroEtaMakesTheTeacherIrrelevant) {
  auto inst = oracles::bilevel_instance(5);
  inst.eta = 0.0;
  for (const auto& [name, g] : oracles::bilevel_oracle(inst, 1e-4))
    for (double v : g.values()) EXPECT_EQ(v, 0.0) << name;
}

TEST(BilevelOracle, UniformTeacherHeadBiasGradientIsAntisymmetric) {
  auto inst = oracles::bilevel_instance(6);
  for (double& v : inst.teacher.at("head.w").mutable_data()) v = 0.0;
  for (double& v : inst.teacher.at("head.b").mutable_data()) v = 0.0;
  const auto g = oracles::bilevel_oracle(inst, 1e-4).at("head.b");
  ASSERT_EQ(g.size(), 2u);
  EXPECT_NEAR(g[0] + g[1], 0.0, 1e-8);
  EXPECT_GT(std::abs(g[0]), 1e-8);
}

TEST(BilevelOracle, RefusesLargeModels) {
  auto inst = oracles::bilevel_instance(7);
  inst.net.base_channels = 8;
  inst.net.depth = 2;
  inst.teacher = segnet::build(inst.net, 1);
  EXPECT_GT(inst.teacher.total_elements(), oracles::kBilevelMaxParams);
  EXPECT_ANY_THROW(oracles::bilevel_oracle(inst, 1e-4));
}
