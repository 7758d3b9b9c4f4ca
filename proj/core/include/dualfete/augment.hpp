#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "dualfete/rng.hpp"
#include "dualfete/synthdata.hpp"

namespace dualfete::data {

struct FlipH {};
struct FlipV {};
struct Rot90 {
  int k = 1;  // counter-clockwise quarter turns
};
struct Translate {
  int dx = 0;
  int dy = 0;
};
using PositionalOp = std::variant<FlipH, FlipV, Rot90, Translate>;

struct Rect {
  std::size_t y0 = 0, x0 = 0, h = 0, w = 0;
  std::size_t area() const noexcept { return h * w; }
};

struct Gamma {
  double gamma = 1.0;
};
struct GaussianNoise {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};
// Pastes `rect` of the (positionally transformed) donor into the image; the
// label follows the donor inside the rectangle.
struct CopyPaste {
  std::int64_t source_id = 0;
  Rect rect;
};
using IntensityOp = std::variant<Gamma, GaussianNoise, CopyPaste>;

struct AugmentationSpec {
  std::vector<PositionalOp> positional;
  std::vector<IntensityOp> intensity;

  bool has_copy_paste() const;
};

// Applies positional ops in order to an (H, W) grid. Vacated pixels get `fill`.
// Quarter turns with odd k require a square grid.
template <class T>
std::vector<T> apply_positional(std::span<const PositionalOp> ops, std::span<const T> grid, std::size_t height,
                                std::size_t width, T fill);

// Random flips plus an integer translation of at most 10% of H (W for dx).
AugmentationSpec draw_weak_spec(Rng& rng, std::size_t height, std::size_t width);
SegSample weak_augment(const SegSample& sample, Rng& rng);
SegSample apply_weak(const AugmentationSpec& spec, const SegSample& sample);

struct StrongView {
  std::vector<double> image;
  AugmentationSpec spec;
};

// Positional transform (flip / quarter turn), then gamma in [0.7, 1.4],
// Gaussian noise with sigma in [0, 0.05] and a copy-paste rectangle covering
// 10-40% of the image from `donor`.
StrongView strong_augment(const SegSample& sample, const SegSample& donor, Rng& rng);

// Executes `spec` on an image; donor is required when the spec pastes.
std::vector<double> apply_to_image(const AugmentationSpec& spec, std::span<const double> image,
                                   std::optional<std::span<const double>> donor_image, std::size_t height,
                                   std::size_t width);

// Positional part of `spec` only. Copy-paste transplants the donor's
// positionally transformed label inside the rectangle.
template <class T>
std::vector<T> apply_positional_to_label(const AugmentationSpec& spec, std::span<const T> label,
                                         std::optional<std::span<const T>> donor_label, std::size_t height,
                                         std::size_t width);

}  // namespace dualfete::data
