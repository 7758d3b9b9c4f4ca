#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dualfete/tensor.hpp"

namespace dualfete::data {

struct SegSample {
  std::int64_t id = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> image;         // (1, H, W), values in [0, 1]
  std::vector<std::uint8_t> label;   // (H, W), class ids

  std::size_t pixels() const noexcept { return height * width; }
};

// Unlabeled samples keep their ground truth so evaluation code can score
// pseudo-labels; the trainer reads it only through metrics.
struct Dataset {
  std::vector<SegSample> labeled;
  std::vector<SegSample> unlabeled;

  std::size_t n_labeled() const noexcept { return labeled.size(); }
  std::size_t n_unlabeled() const noexcept { return unlabeled.size(); }
};

// Samples with 1-3 soft-edged elliptical foreground blobs. The label is the
// blob indicator; the image is the indicator blurred by a Gaussian whose width
// grows with `ambiguity`, plus low-frequency texture, pixel noise and an
// intensity drift that also grow with it.
std::vector<SegSample> generate_dataset(std::uint64_t seed, std::size_t n, std::size_t height, std::size_t width,
                                        double ambiguity);

// Deterministic shuffled split with floor(n * ratio) labeled samples. Emits a
// warning on stderr when N_l > 0.5 * N_u.
Dataset split(std::vector<SegSample> samples, double labeled_ratio, std::uint64_t seed);

// Stacks images into a (B, 1, H, W) tensor.
autograd::Tensor stack_images(std::span<const SegSample> samples);
autograd::Tensor stack_images(std::span<const SegSample* const> samples);

}  // namespace dualfete::data
