#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dualfete/autograd.hpp"
#include "dualfete/error.hpp"
#include "dualfete/losses.hpp"
#include "dualfete/pseudo.hpp"
#include "dualfete/rng.hpp"
#include "dualfete/segnet.hpp"
#include "dualfete/synthdata.hpp"

using namespace dualfete;
using segnet::NetConfig;

namespace {

NetConfig small_net() {
  NetConfig n;
  n.height = n.width = 8;
  n.base_channels = 2;
  n.depth = 2;
  return n;
}

autograd::Tensor random_images(std::uint64_t seed, std::size_t b, const NetConfig& n) {
  Rng rng(seed);
  std::vector<double> v(b * n.height * n.width);
  for (double& x : v) x = uniform(rng, 0.0, 1.0);
  return autograd::Tensor({b, 1, n.height, n.width}, std::move(v));
}

}  // namespace

TEST(Segnet, BuildIsDeterministic) {
  EXPECT_TRUE(segnet::build(NetConfig{}, 5).bitwise_equal(segnet::build(NetConfig{}, 5)));
}

TEST(Segnet, SeedsGiveDifferentWeights) {
  const auto a = segnet::build(NetConfig{}, 1).flatten();
  const auto b = segnet::build(NetConfig{}, 2).flatten();
  std::size_t differ = 0, weights = 0;
  const auto pa = segnet::build(NetConfig{}, 1);
  std::size_t offset = 0;
  for (const auto& [name, t] : pa) {
    // Biases start at zero for every seed; compare the weight tensors.
    if (name.ends_with(".w")) {
      for (std::size_t i = 0; i < t.size(); ++i) differ += a[offset + i] != b[offset + i];
      weights += t.size();
    }
    offset += t.size();
  }
  EXPECT_GE(static_cast<double>(differ), 0.99 * static_cast<double>(weights));
}

TEST(Segnet, ParameterCountRegression) {
  NetConfig n;
  n.height = n.width = 32;
  n.base_channels = 8;
  n.depth = 2;
  // enc0 80, down1 1168, down2 4640, bottleneck 9248, up1 6928, up0 1736, head 18
  EXPECT_EQ(segnet::parameter_count(n), 23818u);
  EXPECT_EQ(segnet::build(n, 1).total_elements(), 23818u);
}

TEST(Segnet, RejectsIndivisibleSize) {
  NetConfig n;
  n.height = n.width = 10;
  n.depth = 2;
  EXPECT_THROW(n.validate(), ContractViolation);
}

TEST(Segnet, OutputIsAPixelSimplex) {
  const auto n = small_net();
  const auto p = segnet::build(n, 3);
  const auto probs = segnet::forward(p, n, random_images(4, 3, n));
  ASSERT_EQ(probs.shape(), (autograd::Shape{3, 2, 8, 8}));
  const std::size_t plane = 64;
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      const double p0 = probs[(b * 2) * plane + i], p1 = probs[(b * 2 + 1) * plane + i];
      EXPECT_GE(p0, 0.0);
      EXPECT_GE(p1, 0.0);
      EXPECT_NEAR(p0 + p1, 1.0, 1e-12);
    }
}

TEST(Segnet, DropoutOffIgnoresSeed) {
  auto n = small_net();
  n.dropout_rate = 0.5;
  const auto p = segnet::build(n, 3);
  const auto x = random_images(1, 2, n);
  EXPECT_TRUE(segnet::forward(p, n, x, false, 1).bitwise_equal(segnet::forward(p, n, x, false, 2)));
}

TEST(Segnet, DropoutOnDependsOnSeed) {
  auto n = small_net();
  n.dropout_rate = 0.5;
  const auto p = segnet::build(n, 3);
  const auto x = random_images(1, 2, n);
  EXPECT_FALSE(segnet::forward(p, n, x, true, 1).bitwise_equal(segnet::forward(p, n, x, true, 2)));
}

TEST(Segnet, EveryTensorReceivesGradient) {
  const NetConfig n{};
  std::size_t all_nonzero = 0;
  constexpr std::size_t kSeeds = 20;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto samples = data::generate_dataset(seed, 2, n.height, n.width, 0.5);
    pseudo::LabelMap labels(2, n.height, n.width);
    for (std::size_t b = 0; b < 2; ++b)
      std::copy(samples[b].label.begin(), samples[b].label.end(), labels.values.begin() + b * labels.plane());
    autograd::Tape tape;
    const auto g = tape.backward(
        loss::cross_entropy(segnet::forward(tape.watch(segnet::build(n, seed)), n, data::stack_images(samples)), labels));
    bool ok = true;
    for (const auto& [name, t] : g) {
      double s = 0.0;
      for (double v : t.values()) s += std::abs(v);
      ok = ok && s > 0.0;
    }
    all_nonzero += ok;
  }
  EXPECT_EQ(all_nonzero, kSeeds);
}

TEST(Segnet, InferConfigRoundTrip) {
  NetConfig n;
  n.height = n.width = 16;
  n.base_channels = 3;
  n.depth = 1;
  n.num_classes = 3;
  EXPECT_EQ(segnet::infer_config(segnet::build(n, 1), 16, 16), n);
}

TEST(Segnet, CheckpointRoundTripIsBitwise) {
  const auto p = segnet::build(small_net(), 9);
  const auto path = std::filesystem::temp_directory_path() / "dualfete_ckpt_roundtrip.dfte";
  segnet::save_checkpoint(p, path);
  EXPECT_TRUE(segnet::load_checkpoint(path).bitwise_equal(p));
  std::filesystem::remove(path);
}

TEST(Segnet, CorruptCheckpointIsRejected) {
  const auto path = std::filesystem::temp_directory_path() / "dualfete_ckpt_bad.dfte";
  std::ofstream(path) << "NOPE";
  EXPECT_ANY_THROW(segnet::load_checkpoint(path));
  std::filesystem::remove(path);
}
