#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "dualfete/augment.hpp"
#include "dualfete/dataset_io.hpp"
#include "dualfete/metrics.hpp"
#include "dualfete/synthdata.hpp"

using namespace dualfete;
using namespace dualfete::data;

namespace {

double threshold_dice(const SegSample& s) {
  std::vector<std::uint8_t> pred(s.pixels());
  for (std::size_t i = 0; i < s.pixels(); ++i) pred[i] = s.image[i] > 0.5;
  return metrics::dice(pred, s.label);
}

double mean_threshold_dice(double ambiguity) {
  const auto samples = generate_dataset(17, 50, 32, 32, ambiguity);
  double s = 0.0;
  for (const auto& x : samples) s += threshold_dice(x);
  return s / 50.0;
}

SegSample ramp_sample(std::int64_t id, std::size_t h, std::size_t w) {
  SegSample s;
  s.id = id;
  s.height = h;
  s.width = w;
  for (std::size_t i = 0; i < h * w; ++i) {
    s.image.push_back(static_cast<double>(i) / static_cast<double>(h * w));
    s.label.push_back(static_cast<std::uint8_t>((i * 7 + static_cast<std::size_t>(id)) % 2));
  }
  return s;
}

}  // namespace

TEST(Generator, UnambiguousImagesThresholdToTheirLabels) {
  for (const auto& s : generate_dataset(3, 20, 32, 32, 0.0)) EXPECT_GT(threshold_dice(s), 0.99) << "sample " << s.id;
}

TEST(Generator, AmbiguityDegradesThresholding) {
  EXPECT_LT(mean_threshold_dice(0.8), mean_threshold_dice(0.1));
}

TEST(Generator, IsDeterministic) {
  const auto a = generate_dataset(9, 5, 16, 16, 0.6);
  const auto b = generate_dataset(9, 5, 16, 16, 0.6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].label, b[i].label);
  }
}

TEST(Generator, ImagesStayInUnitRangeWithForeground) {
  for (const auto& s : generate_dataset(4, 30, 16, 16, 1.0)) {
    for (double v : s.image) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GT(std::count(s.label.begin(), s.label.end(), 1), 0);
  }
}

TEST(Split, FloorsTheLabeledCount) {
  const auto ds = split(generate_dataset(1, 100, 8, 8, 0.2), 0.05, 3);
  EXPECT_EQ(ds.n_labeled(), 5u);
  EXPECT_EQ(ds.n_unlabeled(), 95u);
}

TEST(Split, PartitionsTheIds) {
  const auto ds = split(generate_dataset(1, 40, 8, 8, 0.2), 0.25, 3);
  std::set<std::int64_t> ids;
  for (const auto& s : ds.labeled) ids.insert(s.id);
  for (const auto& s : ds.unlabeled) EXPECT_TRUE(ids.insert(s.id).second) << "id " << s.id << " in both splits";
  EXPECT_EQ(ids.size(), 40u);
}

TEST(Split, IsDeterministic) {
  const auto a = split(generate_dataset(1, 30, 8, 8, 0.2), 0.1, 5);
  const auto b = split(generate_dataset(1, 30, 8, 8, 0.2), 0.1, 5);
  for (std::size_t i = 0; i < a.n_labeled(); ++i) EXPECT_EQ(a.labeled[i].id, b.labeled[i].id);
}

TEST(Split, RejectsAnEmptyLabeledSet) { EXPECT_ANY_THROW(split(generate_dataset(1, 10, 8, 8, 0.2), 0.05, 1)); }

TEST(Augment, IdentityWeakSpecLeavesSampleUnchanged) {
  const auto s = ramp_sample(0, 6, 6);
  const auto out = apply_weak(AugmentationSpec{}, s);
  EXPECT_EQ(out.image, s.image);
  EXPECT_EQ(out.label, s.label);
}

TEST(Augment, FlipsAreInvolutions) {
  const auto s = ramp_sample(0, 5, 7);
  AugmentationSpec spec;
  spec.positional = {FlipH{}, FlipV{}};
  EXPECT_EQ(apply_weak(spec, apply_weak(spec, s)).image, s.image);
}

TEST(Augment, FourQuarterTurnsAreIdentity) {
  const auto s = ramp_sample(0, 6, 6);
  std::vector<PositionalOp> ops(4, Rot90{1});
  EXPECT_EQ(apply_positional<double>(ops, s.image, 6, 6, 0.0), s.image);
  EXPECT_ANY_THROW(apply_positional<double>(std::vector<PositionalOp>{Rot90{1}}, ramp_sample(0, 4, 6).image, 4, 6, 0.0));
}

TEST(Augment, TranslateFillsVacatedPixelsWithBackground) {
  std::vector<std::uint8_t> label(16, 1);
  AugmentationSpec spec;
  spec.positional = {Translate{2, 0}};
  const auto out = apply_positional_to_label<std::uint8_t>(spec, label, std::nullopt, 4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(out[y * 4 + x], x < 2 ? 0 : 1);
}

TEST(Augment, IntensityOnlySpecKeepsLabel) {
  const auto s = ramp_sample(1, 6, 6);
  AugmentationSpec spec;
  spec.intensity = {Gamma{1.3}, GaussianNoise{0.05, 3}};
  EXPECT_EQ(apply_positional_to_label<std::uint8_t>(spec, s.label, std::nullopt, 6, 6), s.label);
  EXPECT_NE(apply_to_image(spec, s.image, std::nullopt, 6, 6), s.image);
}

TEST(Augment, EmptyPasteRectangleChangesNothing) {
  const auto s = ramp_sample(1, 6, 6), donor = ramp_sample(2, 6, 6);
  AugmentationSpec spec;
  spec.intensity = {CopyPaste{donor.id, Rect{2, 2, 0, 0}}};
  EXPECT_EQ(apply_to_image(spec, s.image, std::span<const double>(donor.image), 6, 6), s.image);
}

TEST(Augment, PastedRegionCarriesDonorLabel) {
  const auto s = ramp_sample(1, 6, 6), donor = ramp_sample(2, 6, 6);
  AugmentationSpec spec;
  spec.positional = {FlipH{}};
  const Rect r{1, 2, 3, 2};
  spec.intensity = {CopyPaste{donor.id, r}};
  const auto label = apply_positional_to_label<std::uint8_t>(spec, s.label, std::span<const std::uint8_t>(donor.label), 6, 6);
  const auto own = apply_positional<std::uint8_t>(spec.positional, s.label, 6, 6, 0);
  const auto theirs = apply_positional<std::uint8_t>(spec.positional, donor.label, 6, 6, 0);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      const bool inside = y >= r.y0 && y < r.y0 + r.h && x >= r.x0 && x < r.x0 + r.w;
      EXPECT_EQ(label[y * 6 + x], inside ? theirs[y * 6 + x] : own[y * 6 + x]);
    }
}

TEST(Augment, PositionalOpsKeepImageLabelPairs) {
  // Encode each pixel's label into its image value; any positional spec must
  // move both together.
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    SegSample s = ramp_sample(trial, 10, 10);
    for (std::size_t i = 0; i < s.pixels(); ++i) s.image[i] = 0.25 + 0.5 * s.label[i];
    const auto spec = draw_weak_spec(rng, 10, 10);
    const auto out = apply_weak(spec, s);
    const auto valid = apply_positional<std::uint8_t>(spec.positional, std::vector<std::uint8_t>(100, 1), 10, 10, 0);
    for (std::size_t i = 0; i < 100; ++i)
      if (valid[i]) EXPECT_EQ(out.image[i], 0.25 + 0.5 * out.label[i]);
  }
}

TEST(Augment, StrongAugmentIsDeterministicForAFixedStream) {
  const auto s = ramp_sample(1, 8, 8), donor = ramp_sample(2, 8, 8);
  Rng a(5), b(5);
  const auto x = strong_augment(s, donor, a);
  const auto y = strong_augment(s, donor, b);
  EXPECT_EQ(x.image, y.image);
  EXPECT_TRUE(x.spec.has_copy_paste());
}

TEST(DatasetIo, ExportImportRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "dualfete_io_roundtrip";
  std::filesystem::remove_all(dir);
  const auto samples = generate_dataset(2, 4, 8, 8, 0.5);
  std::vector<ExportedSample> out{{samples[0], Split::Labeled},
                                  {samples[1], Split::Unlabeled},
                                  {samples[2], Split::Unlabeled},
                                  {samples[3], Split::Test}};
  export_dataset(dir, out, 2);
  const auto back = import_dataset(dir);
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back[i].split, out[i].split);
    EXPECT_EQ(back[i].sample.label, samples[i].label);
    // Images travel as f32.
    for (std::size_t k = 0; k < samples[i].pixels(); ++k)
      EXPECT_EQ(back[i].sample.image[k], static_cast<double>(static_cast<float>(samples[i].image[k])));
  }
  std::filesystem::remove_all(dir);
}
