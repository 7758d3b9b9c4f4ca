#pragma once

#include <cstdint>
#include <vector>

#include "dualfete/tensor.hpp"

namespace dualfete::pseudo {

using autograd::Tensor;

// Per-pixel (B, H, W) map.
template <class T>
struct Grid {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(std::size_t b, std::size_t h, std::size_t w, T fill = T{}) : batch(b), height(h), width(w), values(b * h * w, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  std::size_t plane() const noexcept { return height * width; }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }
  bool same_shape(const auto& other) const {
    return batch == other.batch && height == other.height && width == other.width;
  }
  bool operator==(const Grid&) const = default;
};

using LabelMap = Grid<std::uint8_t>;
using PixelMask = Grid<std::uint8_t>;
using ConfidenceMap = Grid<double>;

std::size_t count(const PixelMask& mask);

struct PseudoBundle {
  LabelMap fused;
  LabelMap label_phi;
  LabelMap label_psi;
  ConfidenceMap conf_phi;  // teacher's probability of its own predicted class
  ConfidenceMap conf_psi;
  PixelMask agree_mask;
  PixelMask disagree_mask;
};

// Receiver masks per teacher. With matched pairing the agreement feedback
// lands on the lower-confidence teacher and the disagreement feedback on the
// higher-confidence one; mismatched swaps the two comparators.
struct ReceiverMasks {
  PixelMask phi_agree;
  PixelMask phi_disagree;
  PixelMask psi_agree;
  PixelMask psi_disagree;
};

enum class Pairing { Matched, Mismatched };

// Per-pixel argmax over axis 1 of (B, C, H, W); ties go to the lowest class.
LabelMap argmax_label(const Tensor& probs);

// probs[b, labels[b, y, x], y, x]
ConfidenceMap label_probability(const Tensor& probs, const LabelMap& labels);

// Consensus where the teachers agree; on conflicts the label of the more
// confident teacher, with exact ties resolved toward phi.
PseudoBundle fuse_dual(const Tensor& probs_phi, const Tensor& probs_psi);

// Single-teacher bundle: fused == label_phi, everything marked agreed.
PseudoBundle single_teacher(const Tensor& probs);

// Exact confidence ties belong to neither teacher.
ReceiverMasks receiver_masks(const PseudoBundle& bundle, Pairing pairing = Pairing::Matched);

}  // namespace dualfete::pseudo
