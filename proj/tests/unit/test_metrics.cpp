#include <gtest/gtest.h>

#include <cmath>

#include "dualfete/evaluation.hpp"
#include "dualfete/metrics.hpp"
#include "dualfete/oracles/exhaustive_metrics.hpp"
#include "dualfete/rng.hpp"
#include "dualfete/segnet.hpp"
#include "dualfete/synthdata.hpp"

using namespace dualfete;
using namespace dualfete::metrics;
using Mask = std::vector<std::uint8_t>;

namespace {

Mask random_mask(Rng& rng, std::size_t n, double p) {
  Mask m(n);
  for (auto& v : m) v = coin(rng, p);
  return m;
}

// Largest boundary-to-boundary nearest distance, by brute force.
double hausdorff(const Mask& a, const Mask& b, std::size_t h, std::size_t w) {
  const auto ba = boundary(a, h, w), bb = boundary(b, h, w);
  auto directed = [&](const Mask& from, const Mask& to) {
    double worst = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) {
      if (!from[i]) continue;
      double best = INFINITY;
      for (std::size_t j = 0; j < h * w; ++j)
        if (to[j]) best = std::min(best, std::hypot(double(i / w) - double(j / w), double(i % w) - double(j % w)));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(ba, bb), directed(bb, ba));
}

}  // namespace

TEST(Dice, Cases) {
  EXPECT_EQ(dice(Mask{1, 1, 0}, Mask{1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(dice(Mask{1, 1, 0}, Mask{1, 0, 0}), 2.0 / 3.0);
  EXPECT_EQ(dice(Mask{0, 0}, Mask{0, 0}), 1.0);
  EXPECT_EQ(dice(Mask{1, 0}, Mask{0, 1}), 0.0);
}

TEST(Dice, SymmetricBoundedAndOneOnlyWhenIdentical) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const auto a = random_mask(rng, 16, 0.3), b = random_mask(rng, 16, 0.3);
    const double d = dice(a, b);
    EXPECT_EQ(d, dice(b, a));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_EQ(d == 1.0, a == b);
  }
}

TEST(Hd95, IdenticalMasksAreAtZero) {
  const Mask m{0, 1, 1, 0, 1, 1, 0, 0, 0};
  EXPECT_EQ(hd95(m, m, 3, 3), 0.0);
}

TEST(Hd95, SinglePixelsAtThreeFour) {
  Mask a(64, 0), b(64, 0);
  a[1 * 8 + 1] = 1;
  b[5 * 8 + 4] = 1;
  EXPECT_EQ(hd95(a, b, 8, 8), 5.0);
}

TEST(Hd95, EmptyMaskIsUndefined) {
  EXPECT_FALSE(hd95(Mask(9, 0), Mask{1, 0, 0, 0, 0, 0, 0, 0, 0}, 3, 3).has_value());
}

TEST(Hd95, NeverExceedsTheHausdorffDistance) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_mask(rng, 64, 0.3), b = random_mask(rng, 64, 0.2);
    const auto h = hd95(a, b, 8, 8);
    if (h) EXPECT_LE(*h, hausdorff(a, b, 8, 8) + 1e-12);
  }
}

TEST(Hd95, MatchesTheAllPairsOracle) {
  const auto sweep = oracles::sweep_metrics(31, 100);
  EXPECT_EQ(sweep.hd95_mismatches, 0u);
  EXPECT_EQ(sweep.dice_mismatches, 0u);
}

TEST(Percentile, LinearInterpolation) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_EQ(percentile_sorted(v, 50), 3.0);
  EXPECT_DOUBLE_EQ(percentile_sorted(v, 95), 4.8);
  EXPECT_EQ(percentile_sorted(std::vector<double>{7}, 95), 7.0);
}

TEST(Disagreement, Complements) {
  EXPECT_EQ(disagreement(Mask{1, 0, 1}, Mask{1, 0, 1}), 0.0);
  EXPECT_EQ(disagreement(Mask{1, 0, 0}, Mask{0, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(pl_error(Mask{1, 1, 0}, Mask{1, 0, 0}), 1.0 / 3.0);
  EXPECT_EQ(pl_error(Mask{0, 0}, Mask{0, 0}), 0.0);
}

TEST(Entropy, OneHotIsZeroAndUniformIsMaximal) {
  const autograd::Tensor onehot({1, 2, 1, 3}, {1, 0, 1, 0, 1, 0});
  EXPECT_NEAR(entropy_sum(onehot)[0], 0.0, 1e-7);
  const autograd::Tensor flat({1, 2, 1, 3}, std::vector<double>(6, 0.5));
  EXPECT_NEAR(entropy_sum(flat)[0], 3 * std::log(2.0), 1e-12);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(6);
    for (std::size_t i = 0; i < 3; ++i) {
      v[i] = uniform(rng, 0.0, 1.0);
      v[3 + i] = 1.0 - v[i];
    }
    const double e = entropy_sum(autograd::Tensor({1, 2, 1, 3}, std::move(v)))[0];
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 3 * std::log(2.0) + 1e-12);
  }
}

TEST(PerturbedEval, DeterministicPassesHaveZeroSpread) {
  segnet::NetConfig n;
  n.height = n.width = 8;
  n.depth = 1;
  const auto p = segnet::build(n, 1);
  const auto test = data::generate_dataset(5, 4, 8, 8, 0.4);
  for (const auto& s : eval::perturbed_eval(p, n, test, 4, eval::Perturbation::None, 1)) {
    EXPECT_EQ(s.dice_std, 0.0);
    EXPECT_EQ(s.entropy_std, 0.0);
  }
  const auto plain = eval::score(p, n, test);
  const auto none = eval::perturbed_eval(p, n, test, 3, eval::Perturbation::None, 1);
  for (std::size_t i = 0; i < test.size(); ++i) EXPECT_DOUBLE_EQ(none[i].dice_mean, plain.dice[i]);
}

TEST(PerturbedEval, DropoutSpreadsTheEntropy) {
  segnet::NetConfig n;
  n.height = n.width = 8;
  n.depth = 1;
  n.dropout_rate = 0.3;
  const auto test = data::generate_dataset(5, 4, 8, 8, 0.4);
  int spread = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ps = eval::perturbed_eval(segnet::build(n, seed), n, test, 6, eval::Perturbation::Dropout, seed);
    spread += ps[0].entropy_std > 0.0;
  }
  EXPECT_EQ(spread, 10);
}

TEST(PerturbedEval, ThreadCountDoesNotChangeResults) {
  segnet::NetConfig n;
  n.height = n.width = 8;
  n.depth = 1;
  const auto p = segnet::build(n, 3);
  const auto test = data::generate_dataset(6, 7, 8, 8, 0.4);
  const auto a = eval::perturbed_eval(p, n, test, 3, eval::Perturbation::StrongAug, 9, 1);
  const auto b = eval::perturbed_eval(p, n, test, 3, eval::Perturbation::StrongAug, 9, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].dice_mean, b[i].dice_mean);
    EXPECT_EQ(a[i].entropy_std, b[i].entropy_std);
  }
}
