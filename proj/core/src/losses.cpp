#include "dualfete/losses.hpp"

#include "dualfete/error.hpp"
#include "dualfete/ops.hpp"

namespace dualfete::loss {
namespace {

namespace ag = autograd;

void check_targets(const char* op, const Tensor& probs, const LabelMap& targets, const PixelMask* mask) {
  DUALFETE_REQUIRE(probs.rank() == 4 && probs.dim(0) == targets.batch && probs.dim(2) == targets.height &&
                       probs.dim(3) == targets.width,
                   std::string(op) + ": probabilities " + ag::to_string(probs.shape()) + " do not match targets");
  DUALFETE_REQUIRE(mask == nullptr || mask->same_shape(targets), std::string(op) + ": mask shape mismatch");
  for (auto t : targets.values)
    DUALFETE_REQUIRE(t < probs.dim(1), std::string(op) + ": target class out of range");
}

std::size_t mask_count(const PixelMask* mask, std::size_t all) { return mask ? pseudo::count(*mask) : all; }

// (B, C, H, W) constant: mask broadcast over channels.
Tensor channel_mask(const Tensor& probs, const PixelMask* mask, std::size_t channel) {
  const std::size_t b = probs.dim(0), c = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
  std::vector<double> w(probs.size(), 0.0);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < hw; ++i)
      if (mask == nullptr || (*mask)[n * hw + i]) w[(n * c + channel) * hw + i] = 1.0;
  return Tensor(probs.shape(), std::move(w));
}

Tensor log_probs(const Tensor& probs) { return ag::clamped_log(probs, kProbFloor, 1.0 - kProbFloor); }

// -sum(weights * log p) / n
Tensor weighted_nll(const Tensor& probs, const Tensor& weights, double n) {
  return ag::mul_scalar(ag::sum(ag::mul(log_probs(probs), weights)), -1.0 / n);
}

Tensor dice_from_weights(const Tensor& probs, const Tensor& target_weights, const PixelMask* mask) {
  const std::size_t c = probs.dim(1);
  Tensor total = Tensor::scalar(0.0);
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const Tensor sel = channel_mask(probs, mask, k);
    const Tensor tk = ag::mul(target_weights, sel);  // constant
    double t_sum = 0.0;
    for (double v : tk.data()) t_sum += v;
    // A class missing from the target would only push its probability to
    // zero with a gradient far larger than the cross-entropy term.
    if (t_sum <= 0.0) continue;
    ++present;
    const Tensor inter = ag::sum(ag::mul(probs, tk));
    const Tensor psum = ag::masked_sum(probs, sel);
    const Tensor num = ag::add_scalar(ag::mul_scalar(inter, 2.0), kDiceSmooth);
    const Tensor den = ag::add_scalar(psum, t_sum + kDiceSmooth);
    total = ag::add(total, ag::div(num, den));
  }
  if (present == 0) return Tensor::scalar(0.0);
  return ag::add_scalar(ag::mul_scalar(total, -1.0 / static_cast<double>(present)), 1.0);
}

Tensor soft_weights(const Tensor& probs, const Tensor& targets, const PixelMask* mask) {
  DUALFETE_REQUIRE(targets.shape() == probs.shape(), "soft targets: shape mismatch " + ag::to_string(targets.shape()) +
                                                         " vs " + ag::to_string(probs.shape()));
  DUALFETE_REQUIRE(!targets.requires_grad(), "soft targets must be constants");
  if (mask == nullptr) return targets;
  DUALFETE_REQUIRE(mask->batch == probs.dim(0) && mask->height == probs.dim(2) && mask->width == probs.dim(3),
                   "soft targets: mask shape mismatch");
  const std::size_t b = probs.dim(0), c = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
  std::vector<double> w(targets.values());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < hw; ++i)
        if (!(*mask)[n * hw + i]) w[(n * c + k) * hw + i] = 0.0;
  return Tensor(probs.shape(), std::move(w));
}

}  // namespace

Tensor onehot_weights(const LabelMap& labels, std::size_t num_classes, const PixelMask* mask) {
  const std::size_t hw = labels.plane();
  std::vector<double> w(labels.batch * num_classes * hw, 0.0);
  for (std::size_t n = 0; n < labels.batch; ++n)
    for (std::size_t i = 0; i < hw; ++i)
      if (mask == nullptr || (*mask)[n * hw + i]) w[(n * num_classes + labels[n * hw + i]) * hw + i] = 1.0;
  return Tensor({labels.batch, num_classes, labels.height, labels.width}, std::move(w));
}

Tensor cross_entropy(const Tensor& probs, const LabelMap& targets, const PixelMask* mask) {
  check_targets("cross_entropy", probs, targets, mask);
  const std::size_t n = mask_count(mask, targets.size());
  if (n == 0) return Tensor::scalar(0.0);
  return weighted_nll(probs, onehot_weights(targets, probs.dim(1), mask), static_cast<double>(n));
}

Tensor soft_dice_loss(const Tensor& probs, const LabelMap& targets, const PixelMask* mask) {
  check_targets("soft_dice_loss", probs, targets, mask);
  if (mask_count(mask, targets.size()) == 0) return Tensor::scalar(0.0);
  return dice_from_weights(probs, onehot_weights(targets, probs.dim(1), mask), mask);
}

Tensor seg_loss(const Tensor& probs, const LabelMap& targets, const PixelMask* mask) {
  check_targets("seg_loss", probs, targets, mask);
  if (mask_count(mask, targets.size()) == 0) return Tensor::scalar(0.0);
  return ag::add(ag::mul_scalar(cross_entropy(probs, targets, mask), 0.5),
                 ag::mul_scalar(soft_dice_loss(probs, targets, mask), 0.5));
}

Tensor cross_entropy_soft(const Tensor& probs, const Tensor& targets, const PixelMask* mask) {
  const Tensor w = soft_weights(probs, targets, mask);
  const std::size_t n = mask_count(mask, probs.dim(0) * probs.dim(2) * probs.dim(3));
  if (n == 0) return Tensor::scalar(0.0);
  return weighted_nll(probs, w, static_cast<double>(n));
}

Tensor soft_dice_loss_soft(const Tensor& probs, const Tensor& targets, const PixelMask* mask) {
  const Tensor w = soft_weights(probs, targets, mask);
  if (mask_count(mask, 1) == 0) return Tensor::scalar(0.0);
  return dice_from_weights(probs, w, mask);
}

Tensor seg_loss_soft(const Tensor& probs, const Tensor& targets, const PixelMask* mask) {
  if (mask_count(mask, 1) == 0) return Tensor::scalar(0.0);
  return ag::add(ag::mul_scalar(cross_entropy_soft(probs, targets, mask), 0.5),
                 ag::mul_scalar(soft_dice_loss_soft(probs, targets, mask), 0.5));
}

Tensor masked_log_likelihood(const Tensor& probs, const LabelMap& own_labels, const PixelMask* mask,
                             Reduction reduction) {
  check_targets("masked_log_likelihood", probs, own_labels, mask);
  const std::size_t n = mask_count(mask, own_labels.size());
  if (n == 0) return Tensor::scalar(0.0);
  const Tensor w = onehot_weights(own_labels, probs.dim(1), mask);
  const double scale = reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
  return ag::mul_scalar(ag::sum(ag::mul(log_probs(probs), w)), scale);
}

}  // namespace dualfete::loss
