#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dualfete::oracles {

// All-pairs reference for the 95th percentile Hausdorff distance: every
// boundary pixel of one mask is compared with every boundary pixel of the
// other. Boundary and percentile conventions match the metric's contract.
std::optional<double> hd95_all_pairs(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                     std::size_t height, std::size_t width);

// Dice by explicit counting.
double dice_by_counting(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

struct MetricSweep {
  std::size_t pairs = 0;
  std::size_t hd95_mismatches = 0;
  std::size_t dice_mismatches = 0;
};

// Random masks of size h x w with per-mask foreground density drawn from
// [0.05, 0.6]; every comparison must be bitwise equal.
MetricSweep sweep_metrics(std::uint64_t seed, std::size_t pairs = 200, std::size_t height = 8, std::size_t width = 8);

}  // namespace dualfete::oracles
