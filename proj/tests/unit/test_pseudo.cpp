#include <gtest/gtest.h>

#include "dualfete/oracles/fusion_check.hpp"
#include "dualfete/pseudo.hpp"

using namespace dualfete;
using namespace dualfete::pseudo;
using autograd::Tensor;

namespace {

// One 1x1 image, two classes.
Tensor pixel(double p0, double p1) { return Tensor({1, 2, 1, 1}, {p0, p1}); }

}  // namespace

TEST(Argmax, PicksTheLargerClass) { EXPECT_EQ(argmax_label(pixel(0.2, 0.8))[0], 1); }

TEST(Argmax, TiesGoToTheLowestClass) { EXPECT_EQ(argmax_label(pixel(0.5, 0.5))[0], 0); }

TEST(Fuse, ConsensusPixel) {
  const auto b = fuse_dual(pixel(0.9, 0.1), pixel(0.8, 0.2));
  EXPECT_EQ(b.fused[0], 0);
  EXPECT_EQ(b.agree_mask[0], 1);
  EXPECT_EQ(b.disagree_mask[0], 0);
}

TEST(Fuse, ConflictTakesTheMoreConfidentTeacher) {
  const auto b = fuse_dual(pixel(0.6, 0.4), pixel(0.3, 0.7));
  EXPECT_EQ(b.fused[0], 1);
  EXPECT_EQ(b.disagree_mask[0], 1);
  EXPECT_DOUBLE_EQ(b.conf_psi[0], 0.7);
}

TEST(Fuse, ConflictTieGoesToPhi) {
  const auto b = fuse_dual(pixel(0.6, 0.4), pixel(0.4, 0.6));
  EXPECT_EQ(b.fused[0], 0);
  EXPECT_EQ(b.disagree_mask[0], 1);
}

TEST(Fuse, ShapeMismatchIsRejected) {
  EXPECT_ANY_THROW(fuse_dual(pixel(0.5, 0.5), Tensor({1, 2, 1, 2}, {0.5, 0.5, 0.5, 0.5})));
}

TEST(Receivers, AgreementFeedbackGoesToTheLessConfidentTeacher) {
  const auto m = receiver_masks(fuse_dual(pixel(0.8, 0.2), pixel(0.9, 0.1)));
  EXPECT_EQ(m.phi_agree[0], 1);
  EXPECT_EQ(m.psi_agree[0], 0);
  EXPECT_EQ(m.phi_disagree[0] + m.psi_disagree[0], 0);
}

TEST(Receivers, DisagreementFeedbackGoesToTheMoreConfidentTeacher) {
  const auto m = receiver_masks(fuse_dual(pixel(0.55, 0.45), pixel(0.3, 0.7)));
  EXPECT_EQ(m.psi_disagree[0], 1);
  EXPECT_EQ(m.phi_disagree[0], 0);
  EXPECT_EQ(m.phi_agree[0] + m.psi_agree[0], 0);
}

TEST(Receivers, MismatchedPairingSwapsTheComparators) {
  const auto m = receiver_masks(fuse_dual(pixel(0.8, 0.2), pixel(0.9, 0.1)), Pairing::Mismatched);
  EXPECT_EQ(m.phi_agree[0], 0);
  EXPECT_EQ(m.psi_agree[0], 1);
}

TEST(Receivers, ConfidenceTiesReachNobody) {
  for (const auto& [a, b] : {std::pair{pixel(0.7, 0.3), pixel(0.7, 0.3)}, std::pair{pixel(0.6, 0.4), pixel(0.4, 0.6)}}) {
    const auto m = receiver_masks(fuse_dual(a, b));
    EXPECT_EQ(m.phi_agree[0] + m.psi_agree[0] + m.phi_disagree[0] + m.psi_disagree[0], 0);
  }
}

TEST(SingleTeacher, MarksEverythingAgreed) {
  const auto b = single_teacher(Tensor({1, 2, 1, 2}, {0.3, 0.9, 0.7, 0.1}));
  EXPECT_EQ(b.fused, b.label_phi);
  EXPECT_EQ(count(b.agree_mask), 2u);
  EXPECT_EQ(count(b.disagree_mask), 0u);
}

TEST(FusionLaws, HoldOnRandomInstances) {
  const auto rep = oracles::check_fusion(77, 300);
  EXPECT_EQ(rep.total_violations(), 0u);
  EXPECT_GT(rep.pixels, 1000u);
}
