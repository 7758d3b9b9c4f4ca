#include "dualfete/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "dualfete/error.hpp"
#include "dualfete/rng.hpp"

namespace dualfete::data {
namespace {

struct Blob {
  double cy, cx, ry, rx, angle, contrast;
};

std::vector<double> gaussian_blur(const std::vector<double>& src, std::size_t h, std::size_t w, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double z = 0.0;
  for (int i = -radius; i <= radius; ++i) z += (kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (double& k : kernel) k /= z;

  auto clampi = [](int v, std::size_t n) { return static_cast<std::size_t>(std::clamp(v, 0, static_cast<int>(n) - 1)); };
  std::vector<double> tmp(src.size()), out(src.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * src[y * w + clampi(static_cast<int>(x) + i, w)];
      tmp[y * w + x] = s;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp[clampi(static_cast<int>(y) + i, h) * w + x];
      out[y * w + x] = s;
    }
  return out;
}

SegSample make_sample(std::uint64_t seed, std::int64_t id, std::size_t h, std::size_t w, double ambiguity) {
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(id) + 1);
  const double side = static_cast<double>(std::min(h, w));

  std::vector<Blob> blobs(static_cast<std::size_t>(uniform_int(rng, 1, 3)));
  for (auto& b : blobs) {
    b.cy = uniform(rng, 0.2, 0.8) * static_cast<double>(h);
    b.cx = uniform(rng, 0.2, 0.8) * static_cast<double>(w);
    b.ry = uniform(rng, 0.10, 0.24) * side;
    b.rx = uniform(rng, 0.10, 0.24) * side;
    b.angle = uniform(rng, 0.0, std::numbers::pi);
    // Fainter blobs become more common as ambiguity grows.
    b.contrast = 0.6 * (1.0 - 0.45 * ambiguity * uniform(rng, 0.0, 1.0));
  }

  SegSample s;
  s.id = id;
  s.height = h;
  s.width = w;
  s.label.assign(h * w, 0);
  std::vector<double> intensity(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
      for (const auto& b : blobs) {
        const double dy = py - b.cy, dx = px - b.cx;
        const double u = (dx * std::cos(b.angle) + dy * std::sin(b.angle)) / b.rx;
        const double v = (-dx * std::sin(b.angle) + dy * std::cos(b.angle)) / b.ry;
        if (u * u + v * v <= 1.0) {
          s.label[y * w + x] = 1;
          intensity[y * w + x] = std::max(intensity[y * w + x], b.contrast);
        }
      }
    }

  const std::vector<double> blurred = gaussian_blur(intensity, h, w, ambiguity * 0.12 * side);

  // Low-frequency texture: a few random plane waves.
  struct Wave {
    double ky, kx, phase, amp;
  };
  std::vector<Wave> waves(3);
  for (auto& wv : waves) {
    const double freq = uniform(rng, 1.0, 3.0) * 2.0 * std::numbers::pi / side;
    const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    wv = {freq * std::sin(dir), freq * std::cos(dir), uniform(rng, 0.0, 2.0 * std::numbers::pi),
          0.25 * ambiguity * uniform(rng, 0.5, 1.0)};
  }
  const double drift_dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double drift_amp = 0.4 * ambiguity;
  const double noise_sigma = 0.02 + 0.06 * ambiguity;

  s.image.resize(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      double texture = 0.0;
      for (const auto& wv : waves) texture += wv.amp * std::sin(wv.ky * fy + wv.kx * fx + wv.phase);
      const double ry = fy / static_cast<double>(h) - 0.5, rx = fx / static_cast<double>(w) - 0.5;
      const double drift = drift_amp * (ry * std::sin(drift_dir) + rx * std::cos(drift_dir));
      const double v = 0.2 + blurred[y * w + x] + texture + drift + noise_sigma * normal(rng);
      s.image[y * w + x] = std::clamp(v, 0.0, 1.0);
    }
  return s;
}

}  // namespace

std::vector<SegSample> generate_dataset(std::uint64_t seed, std::size_t n, std::size_t height, std::size_t width,
                                        double ambiguity) {
  DUALFETE_REQUIRE(ambiguity >= 0.0 && ambiguity <= 1.0, "generate_dataset: ambiguity must be in [0, 1]");
  DUALFETE_REQUIRE(height > 0 && width > 0, "generate_dataset: empty image size");
  std::vector<SegSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_sample(seed, static_cast<std::int64_t>(i), height, width, ambiguity));
  return out;
}

Dataset split(std::vector<SegSample> samples, double labeled_ratio, std::uint64_t seed) {
  DUALFETE_REQUIRE(labeled_ratio > 0.0 && labeled_ratio < 1.0, "split: labeled_ratio must be in (0, 1)");
  const auto n_labeled = static_cast<std::size_t>(std::floor(static_cast<double>(samples.size()) * labeled_ratio));
  DUALFETE_REQUIRE(n_labeled > 0, "split: no labeled samples after flooring " + std::to_string(samples.size()) +
                                      " * " + std::to_string(labeled_ratio));
  Rng rng = make_rng(seed, 0x5B117);
  for (std::size_t i = samples.size(); i > 1; --i)
    std::swap(samples[i - 1], samples[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
  Dataset ds;
  ds.labeled.assign(std::make_move_iterator(samples.begin()),
                    std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_labeled)));
  ds.unlabeled.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_labeled)),
                      std::make_move_iterator(samples.end()));
  if (2 * ds.n_labeled() > ds.n_unlabeled())
    std::cerr << "warning: labeled set (" << ds.n_labeled() << ") is more than half the unlabeled set ("
              << ds.n_unlabeled() << ")\n";
  return ds;
}

autograd::Tensor stack_images(std::span<const SegSample* const> samples) {
  DUALFETE_REQUIRE(!samples.empty(), "stack_images: empty batch");
  const std::size_t h = samples[0]->height, w = samples[0]->width;
  std::vector<double> data;
  data.reserve(samples.size() * h * w);
  for (const SegSample* s : samples) {
    DUALFETE_REQUIRE(s->height == h && s->width == w, "stack_images: mixed image sizes");
    data.insert(data.end(), s->image.begin(), s->image.end());
  }
  return autograd::Tensor({samples.size(), 1, h, w}, std::move(data));
}

autograd::Tensor stack_images(std::span<const SegSample> samples) {
  std::vector<const SegSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return stack_images(std::span<const SegSample* const>(ptrs));
}

}  // namespace dualfete::data
