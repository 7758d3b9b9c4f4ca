#include "dualfete/augment.hpp"

#include <algorithm>
#include <cmath>

#include "dualfete/error.hpp"

namespace dualfete::data {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

template <class T>
std::vector<T> apply_one(const PositionalOp& op, std::span<const T> in, std::size_t h, std::size_t w, T fill) {
  std::vector<T> out(in.size(), fill);
  std::visit(Overloaded{
                 [&](const FlipH&) {
                   for (std::size_t y = 0; y < h; ++y)
                     for (std::size_t x = 0; x < w; ++x) out[y * w + x] = in[y * w + (w - 1 - x)];
                 },
                 [&](const FlipV&) {
                   for (std::size_t y = 0; y < h; ++y)
                     for (std::size_t x = 0; x < w; ++x) out[y * w + x] = in[(h - 1 - y) * w + x];
                 },
                 [&](const Rot90& r) {
                   const int k = ((r.k % 4) + 4) % 4;
                   DUALFETE_REQUIRE(k % 2 == 0 || h == w, "rot90: odd quarter turns need a square grid");
                   for (std::size_t y = 0; y < h; ++y)
                     for (std::size_t x = 0; x < w; ++x) {
                       std::size_t sy = y, sx = x;
                       switch (k) {
                         case 1: sy = x; sx = w - 1 - y; break;
                         case 2: sy = h - 1 - y; sx = w - 1 - x; break;
                         case 3: sy = h - 1 - x; sx = y; break;
                         default: break;
                       }
                       out[y * w + x] = in[sy * w + sx];
                     }
                 },
                 [&](const Translate& t) {
                   for (std::size_t y = 0; y < h; ++y)
                     for (std::size_t x = 0; x < w; ++x) {
                       const auto sy = static_cast<std::ptrdiff_t>(y) - t.dy;
                       const auto sx = static_cast<std::ptrdiff_t>(x) - t.dx;
                       if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) &&
                           sx < static_cast<std::ptrdiff_t>(w))
                         out[y * w + x] = in[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
                     }
                 },
             },
             op);
  return out;
}

template <class T>
void paste(const Rect& r, std::span<const T> src, std::vector<T>& dst, std::size_t h, std::size_t w) {
  DUALFETE_REQUIRE(r.y0 + r.h <= h && r.x0 + r.w <= w, "copy-paste: rectangle outside the image");
  for (std::size_t y = r.y0; y < r.y0 + r.h; ++y)
    for (std::size_t x = r.x0; x < r.x0 + r.w; ++x) dst[y * w + x] = src[y * w + x];
}

}  // namespace

bool AugmentationSpec::has_copy_paste() const {
  return std::any_of(intensity.begin(), intensity.end(),
                     [](const IntensityOp& op) { return std::holds_alternative<CopyPaste>(op); });
}

template <class T>
std::vector<T> apply_positional(std::span<const PositionalOp> ops, std::span<const T> grid, std::size_t height,
                                std::size_t width, T fill) {
  DUALFETE_REQUIRE(grid.size() == height * width, "apply_positional: grid size does not match H x W");
  std::vector<T> cur(grid.begin(), grid.end());
  for (const auto& op : ops) cur = apply_one<T>(op, cur, height, width, fill);
  return cur;
}

template std::vector<double> apply_positional(std::span<const PositionalOp>, std::span<const double>, std::size_t,
                                              std::size_t, double);
template std::vector<std::uint8_t> apply_positional(std::span<const PositionalOp>, std::span<const std::uint8_t>,
                                                    std::size_t, std::size_t, std::uint8_t);

AugmentationSpec draw_weak_spec(Rng& rng, std::size_t height, std::size_t width) {
  AugmentationSpec spec;
  if (coin(rng)) spec.positional.emplace_back(FlipH{});
  if (coin(rng)) spec.positional.emplace_back(FlipV{});
  const auto max_dy = static_cast<std::int64_t>(height / 10);
  const auto max_dx = static_cast<std::int64_t>(width / 10);
  const int dx = static_cast<int>(uniform_int(rng, -max_dx, max_dx));
  const int dy = static_cast<int>(uniform_int(rng, -max_dy, max_dy));
  if (dx != 0 || dy != 0) spec.positional.emplace_back(Translate{dx, dy});
  return spec;
}

SegSample apply_weak(const AugmentationSpec& spec, const SegSample& sample) {
  SegSample out = sample;
  out.image = apply_positional<double>(spec.positional, sample.image, sample.height, sample.width, 0.0);
  out.label = apply_positional<std::uint8_t>(spec.positional, sample.label, sample.height, sample.width, 0);
  return out;
}

SegSample weak_augment(const SegSample& sample, Rng& rng) {
  return apply_weak(draw_weak_spec(rng, sample.height, sample.width), sample);
}

std::vector<double> apply_to_image(const AugmentationSpec& spec, std::span<const double> image,
                                   std::optional<std::span<const double>> donor_image, std::size_t height,
                                   std::size_t width) {
  std::vector<double> out = apply_positional<double>(spec.positional, image, height, width, 0.0);
  std::vector<double> donor;
  for (const auto& op : spec.intensity) {
    std::visit(Overloaded{
                   [&](const Gamma& g) {
                     for (double& v : out) v = std::pow(std::clamp(v, 0.0, 1.0), g.gamma);
                   },
                   [&](const GaussianNoise& n) {
                     Rng rng(mix_seed(n.seed));
                     for (double& v : out) v = std::clamp(v + n.sigma * normal(rng), 0.0, 1.0);
                   },
                   [&](const CopyPaste& cp) {
                     DUALFETE_REQUIRE(donor_image.has_value(), "apply_to_image: copy-paste needs a donor image");
                     if (donor.empty())
                       donor = apply_positional<double>(spec.positional, *donor_image, height, width, 0.0);
                     paste<double>(cp.rect, donor, out, height, width);
                   },
               },
               op);
  }
  return out;
}

StrongView strong_augment(const SegSample& sample, const SegSample& donor, Rng& rng) {
  DUALFETE_REQUIRE(donor.height == sample.height && donor.width == sample.width,
                   "strong_augment: donor size differs from sample");
  const std::size_t h = sample.height, w = sample.width;
  AugmentationSpec spec;
  if (h == w) {
    const int k = static_cast<int>(uniform_int(rng, 0, 3));
    if (k != 0) spec.positional.emplace_back(Rot90{k});
  }
  if (coin(rng)) spec.positional.emplace_back(FlipH{});

  spec.intensity.emplace_back(Gamma{uniform(rng, 0.7, 1.4)});
  spec.intensity.emplace_back(GaussianNoise{uniform(rng, 0.0, 0.05), rng()});

  const double area_frac = uniform(rng, 0.10, 0.40);
  const double aspect = uniform(rng, 0.5, 2.0);
  const double area = area_frac * static_cast<double>(h * w);
  auto rh = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
  rh = std::clamp<std::size_t>(rh, 1, h);
  auto rw = static_cast<std::size_t>(std::lround(area / static_cast<double>(rh)));
  rw = std::clamp<std::size_t>(rw, 1, w);
  Rect rect{static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(h - rh))),
            static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w - rw))), rh, rw};
  spec.intensity.emplace_back(CopyPaste{donor.id, rect});

  StrongView view;
  view.image = apply_to_image(spec, sample.image, std::span<const double>(donor.image), h, w);
  view.spec = std::move(spec);
  return view;
}

template <class T>
std::vector<T> apply_positional_to_label(const AugmentationSpec& spec, std::span<const T> label,
                                         std::optional<std::span<const T>> donor_label, std::size_t height,
                                         std::size_t width) {
  std::vector<T> out = apply_positional<T>(spec.positional, label, height, width, T{0});
  std::vector<T> donor;
  for (const auto& op : spec.intensity) {
    if (const auto* cp = std::get_if<CopyPaste>(&op)) {
      DUALFETE_REQUIRE(donor_label.has_value(), "apply_positional_to_label: copy-paste needs the donor label");
      if (donor.empty()) donor = apply_positional<T>(spec.positional, *donor_label, height, width, T{0});
      paste<T>(cp->rect, donor, out, height, width);
    }
  }
  return out;
}

template std::vector<std::uint8_t> apply_positional_to_label(const AugmentationSpec&, std::span<const std::uint8_t>,
                                                             std::optional<std::span<const std::uint8_t>>, std::size_t,
                                                             std::size_t);
template std::vector<double> apply_positional_to_label(const AugmentationSpec&, std::span<const double>,
                                                       std::optional<std::span<const double>>, std::size_t,
                                                       std::size_t);

}  // namespace dualfete::data
