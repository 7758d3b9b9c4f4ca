#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace dualfete::oracles {

// Violation counts per law over randomized teacher pairs. Probabilities are
// sometimes quantised so that exact confidence ties occur.
//   argmax        per-pixel scan, lowest class on ties
//   partition     agree + disagree covers each pixel exactly once
//   consensus     fused == both labels on agreement
//   optimality    on conflict the fused label carries the largest probability
//                 any teacher assigns to any class; ties go to phi
//   confidence    conf == probability of the teacher's own label
//   receivers     exact comparator definition, disjointness, subset of support
//   symmetry      swapping teachers swaps labels and masks
struct FusionReport {
  std::size_t instances = 0;
  std::size_t pixels = 0;
  std::map<std::string, std::size_t> violations;
  std::size_t total_violations() const;
};

FusionReport check_fusion(std::uint64_t seed, std::size_t instances = 1000);

}  // namespace dualfete::oracles
