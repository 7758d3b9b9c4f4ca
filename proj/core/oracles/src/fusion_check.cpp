#include "dualfete/oracles/fusion_check.hpp"

#include <cmath>

#include "dualfete/pseudo.hpp"
#include "fixtures.hpp"

namespace dualfete::oracles {

std::size_t FusionReport::total_violations() const {
  std::size_t n = 0;
  for (const auto& [law, count] : violations) n += count;
  return n;
}

namespace {

autograd::Tensor quantise(const autograd::Tensor& probs, std::size_t c) {
  // Multiples of 1/10 renormalised per pixel; plenty of exact ties remain.
  std::vector<double> v(probs.values());
  const std::size_t b = probs.dim(0), plane = probs.dim(2) * probs.dim(3);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      double z = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        double& x = v[(n * c + k) * plane + i];
        x = std::round(x * 10.0) + 1.0;
        z += x;
      }
      for (std::size_t k = 0; k < c; ++k) v[(n * c + k) * plane + i] /= z;
    }
  return autograd::Tensor(probs.shape(), std::move(v));
}

}  // namespace

FusionReport check_fusion(std::uint64_t seed, std::size_t instances) {
  FusionReport rep;
  for (const char* law : {"argmax", "partition", "consensus", "optimality", "confidence", "receivers", "symmetry"})
    rep.violations[law] = 0;
  auto bump = [&](const char* law, bool ok) { rep.violations[law] += ok ? 0 : 1; };

  Rng rng = make_rng(seed, 0xF5);
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const auto b = static_cast<std::size_t>(uniform_int(rng, 1, 3));
    const auto c = static_cast<std::size_t>(uniform_int(rng, 2, 4));
    const auto h = static_cast<std::size_t>(uniform_int(rng, 1, 6));
    const auto w = static_cast<std::size_t>(uniform_int(rng, 1, 6));
    auto pp = detail::random_simplex(rng, b, c, h, w);
    auto pq = detail::random_simplex(rng, b, c, h, w);
    if (inst % 3 == 0) {
      pp = quantise(pp, c);
      pq = quantise(pq, c);
    }
    const auto bundle = pseudo::fuse_dual(pp, pq);
    const auto masks = pseudo::receiver_masks(bundle, pseudo::Pairing::Matched);
    const auto swapped = pseudo::fuse_dual(pq, pp);
    const auto swapped_masks = pseudo::receiver_masks(swapped, pseudo::Pairing::Matched);
    ++rep.instances;

    const std::size_t plane = h * w;
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t px = n * plane + i;
        ++rep.pixels;
        auto at = [&](const autograd::Tensor& t, std::size_t k) { return t[(n * c + k) * plane + i]; };
        std::size_t ap = 0, aq = 0;
        for (std::size_t k = 1; k < c; ++k) {
          if (at(pp, k) > at(pp, ap)) ap = k;
          if (at(pq, k) > at(pq, aq)) aq = k;
        }
        bump("argmax", bundle.label_phi[px] == ap && bundle.label_psi[px] == aq);

        const double fp = at(pp, ap), fq = at(pq, aq);
        bump("confidence", bundle.conf_phi[px] == fp && bundle.conf_psi[px] == fq);

        const bool agree = ap == aq;
        bump("partition", bundle.agree_mask[px] + bundle.disagree_mask[px] == 1 && bundle.agree_mask[px] == agree);

        if (agree) {
          bump("consensus", bundle.fused[px] == ap);
        } else {
          double best = -1.0;
          for (std::size_t k = 0; k < c; ++k) best = std::max({best, at(pp, k), at(pq, k)});
          const std::size_t expect = fq > fp ? aq : ap;
          const std::size_t f = bundle.fused[px];
          bump("optimality", f == expect && std::max(at(pp, f), at(pq, f)) == best);
        }

        const bool phi_agree = agree && fp < fq, psi_agree = agree && fq < fp;
        const bool phi_dis = !agree && fp > fq, psi_dis = !agree && fq > fp;
        bump("receivers", masks.phi_agree[px] == phi_agree && masks.psi_agree[px] == psi_agree &&
                              masks.phi_disagree[px] == phi_dis && masks.psi_disagree[px] == psi_dis &&
                              !(masks.phi_agree[px] && masks.psi_agree[px]) &&
                              !(masks.phi_disagree[px] && masks.psi_disagree[px]) &&
                              (!(masks.phi_agree[px] || masks.psi_agree[px]) || bundle.agree_mask[px]) &&
                              (!(masks.phi_disagree[px] || masks.psi_disagree[px]) || bundle.disagree_mask[px]));

        const bool tie_conflict = !agree && fp == fq;
        bump("symmetry", swapped.label_phi[px] == bundle.label_psi[px] && swapped.label_psi[px] == bundle.label_phi[px] &&
                             swapped.conf_phi[px] == bundle.conf_psi[px] &&
                             swapped_masks.phi_agree[px] == masks.psi_agree[px] &&
                             swapped_masks.psi_disagree[px] == masks.phi_disagree[px] &&
                             (tie_conflict || swapped.fused[px] == bundle.fused[px]));
      }
  }
  return rep;
}

}  // namespace dualfete::oracles
