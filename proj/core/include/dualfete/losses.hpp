#pragma once

#include "dualfete/pseudo.hpp"
#include "dualfete/tensor.hpp"

namespace dualfete::loss {

using autograd::Tensor;
using pseudo::LabelMap;
using pseudo::PixelMask;

// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before any log.
inline constexpr double kProbFloor = 1e-9;
inline constexpr double kDiceSmooth = 1e-5;

// Mean over mask == 1 pixels of -log p[target]. A null mask selects every
// pixel; an empty mask yields an untracked zero.
Tensor cross_entropy(const Tensor& probs, const LabelMap& targets, const PixelMask* mask = nullptr);

// 1 - mean_c (2 sum(p_c t_c) + s) / (sum p_c + sum t_c + s), pooled over the
// batch and restricted to the mask. The mean runs over classes that occur in
// the masked target.
Tensor soft_dice_loss(const Tensor& probs, const LabelMap& targets, const PixelMask* mask = nullptr);

// 0.5 * cross-entropy + 0.5 * soft Dice on the mask.
Tensor seg_loss(const Tensor& probs, const LabelMap& targets, const PixelMask* mask = nullptr);

// Soft-target counterparts: `targets` is a (B, C, H, W) probability map.
Tensor cross_entropy_soft(const Tensor& probs, const Tensor& targets, const PixelMask* mask = nullptr);
Tensor soft_dice_loss_soft(const Tensor& probs, const Tensor& targets, const PixelMask* mask = nullptr);
Tensor seg_loss_soft(const Tensor& probs, const Tensor& targets, const PixelMask* mask = nullptr);

enum class Reduction { Mean, Sum };

// log P of the teacher's own labels on the receiver mask. Mean divides the
// summed log-probability by the mask size; Sum is the log of the raw product.
// Empty masks give an untracked zero.
Tensor masked_log_likelihood(const Tensor& probs, const LabelMap& own_labels, const PixelMask* mask,
                             Reduction reduction = Reduction::Mean);

// (B, H, W) mask -> (B, C, H, W) constant tensor holding mask * onehot(labels).
Tensor onehot_weights(const LabelMap& labels, std::size_t num_classes, const PixelMask* mask);

}  // namespace dualfete::loss
