#include "dualfete/pseudo.hpp"

#include <algorithm>

#include "dualfete/error.hpp"

namespace dualfete::pseudo {

std::size_t count(const PixelMask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.values.begin(), mask.values.end(), [](auto v) { return v != 0; }));
}

LabelMap argmax_label(const Tensor& probs) {
  DUALFETE_REQUIRE(probs.rank() == 4, "argmax_label: expected (B, C, H, W), got " + autograd::to_string(probs.shape()));
  const std::size_t b = probs.dim(0), c = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
  DUALFETE_REQUIRE(c <= 256, "argmax_label: more than 256 classes");
  LabelMap out(b, probs.dim(2), probs.dim(3));
  const auto p = probs.data();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = 0;
      double best_v = p[n * c * hw + i];
      for (std::size_t k = 1; k < c; ++k) {
        const double v = p[(n * c + k) * hw + i];
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      out[n * hw + i] = static_cast<std::uint8_t>(best);
    }
  return out;
}

ConfidenceMap label_probability(const Tensor& probs, const LabelMap& labels) {
  DUALFETE_REQUIRE(probs.rank() == 4 && probs.dim(0) == labels.batch && probs.dim(2) == labels.height &&
                       probs.dim(3) == labels.width,
                   "label_probability: shape mismatch");
  const std::size_t c = probs.dim(1), hw = labels.plane();
  ConfidenceMap out(labels.batch, labels.height, labels.width);
  for (std::size_t n = 0; n < labels.batch; ++n)
    for (std::size_t i = 0; i < hw; ++i) out[n * hw + i] = probs[(n * c + labels[n * hw + i]) * hw + i];
  return out;
}

PseudoBundle fuse_dual(const Tensor& probs_phi, const Tensor& probs_psi) {
  DUALFETE_REQUIRE(probs_phi.shape() == probs_psi.shape(), "fuse_dual: shape mismatch " +
                                                               autograd::to_string(probs_phi.shape()) + " vs " +
                                                               autograd::to_string(probs_psi.shape()));
  PseudoBundle out;
  out.label_phi = argmax_label(probs_phi);
  out.label_psi = argmax_label(probs_psi);
  out.conf_phi = label_probability(probs_phi, out.label_phi);
  out.conf_psi = label_probability(probs_psi, out.label_psi);
  const auto& lp = out.label_phi;
  out.fused = LabelMap(lp.batch, lp.height, lp.width);
  out.agree_mask = PixelMask(lp.batch, lp.height, lp.width);
  out.disagree_mask = PixelMask(lp.batch, lp.height, lp.width);
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (out.label_phi[i] == out.label_psi[i]) {
      out.fused[i] = out.label_phi[i];
      out.agree_mask[i] = 1;
    } else {
      out.fused[i] = out.conf_psi[i] > out.conf_phi[i] ? out.label_psi[i] : out.label_phi[i];
      out.disagree_mask[i] = 1;
    }
  }
  return out;
}

PseudoBundle single_teacher(const Tensor& probs) {
  PseudoBundle out;
  out.label_phi = argmax_label(probs);
  out.conf_phi = label_probability(probs, out.label_phi);
  out.label_psi = out.label_phi;
  out.conf_psi = out.conf_phi;
  out.fused = out.label_phi;
  const auto& l = out.label_phi;
  out.agree_mask = PixelMask(l.batch, l.height, l.width, 1);
  out.disagree_mask = PixelMask(l.batch, l.height, l.width, 0);
  return out;
}

ReceiverMasks receiver_masks(const PseudoBundle& bundle, Pairing pairing) {
  const auto& l = bundle.fused;
  ReceiverMasks out{PixelMask(l.batch, l.height, l.width), PixelMask(l.batch, l.height, l.width),
                    PixelMask(l.batch, l.height, l.width), PixelMask(l.batch, l.height, l.width)};
  const bool matched = pairing == Pairing::Matched;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double cphi = bundle.conf_phi[i], cpsi = bundle.conf_psi[i];
    if (cphi == cpsi) continue;
    const bool phi_lower = cphi < cpsi;
    if (bundle.label_phi[i] == bundle.label_psi[i]) {
      // agreement feedback: lower side when matched, higher side when mismatched
      const bool to_phi = matched ? phi_lower : !phi_lower;
      (to_phi ? out.phi_agree : out.psi_agree)[i] = 1;
    } else {
      const bool to_phi = matched ? !phi_lower : phi_lower;
      (to_phi ? out.phi_disagree : out.psi_disagree)[i] = 1;
    }
  }
  return out;
}

}  // namespace dualfete::pseudo
