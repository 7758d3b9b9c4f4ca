#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualfete/tensor.hpp"

namespace dualfete::metrics {

// Binary masks: any nonzero value is foreground.
using MaskView = std::span<const std::uint8_t>;

// 2|A n B| / (|A| + |B|); both empty -> 1.
double dice(MaskView pred, MaskView gt);

// Value written to logs when hd95 is undefined (an empty mask).
inline constexpr double kHd95Missing = -1.0;

// Boundary pixels: foreground with a 4-neighbour that is background or off-grid.
std::vector<std::uint8_t> boundary(MaskView mask, std::size_t height, std::size_t width);

// 95th percentile (linear interpolation between order statistics) of the
// symmetric set of boundary-to-nearest-boundary Euclidean distances, in
// pixels. Nearest distances come from an exact squared Euclidean distance
// transform. nullopt when either mask is empty.
std::optional<double> hd95(MaskView pred, MaskView gt, std::size_t height, std::size_t width);

// Linear-interpolation percentile (q in [0, 100]) of an ascending-sorted list.
double percentile_sorted(std::span<const double> sorted, double q);

// 1 - dice(pred_phi, pred_psi)
double disagreement(MaskView pred_phi, MaskView pred_psi);
// 1 - foreground dice(pseudo, gt)
double pl_error(MaskView pseudo_labels, MaskView gt);

// Per-image sum over pixels and classes of -p log p (natural log) for a
// (B, C, H, W) probability map.
std::vector<double> entropy_sum(const autograd::Tensor& probs);

struct MetricsRecord {
  std::int64_t step = 0;
  std::map<std::string, double> values;
};

}  // namespace dualfete::metrics
