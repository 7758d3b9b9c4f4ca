#pragma once

// Small builders shared by the oracle translation units.

#include <cmath>
#include <span>
#include <vector>

#include "dualfete/feedback.hpp"
#include "dualfete/pseudo.hpp"
#include "dualfete/rng.hpp"
#include "dualfete/synthdata.hpp"

namespace dualfete::oracles::detail {

inline pseudo::LabelMap stack_labels(std::span<const data::SegSample> samples) {
  pseudo::LabelMap out(samples.size(), samples[0].height, samples[0].width);
  for (std::size_t b = 0; b < samples.size(); ++b)
    std::copy(samples[b].label.begin(), samples[b].label.end(), out.values.begin() + b * out.plane());
  return out;
}

inline feedback::LabeledBatch labeled_batch(std::span<const data::SegSample> samples) {
  return {data::stack_images(samples), stack_labels(samples)};
}

// Random points on the simplex, (B, C, H, W).
inline autograd::Tensor random_simplex(Rng& rng, std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
  std::vector<double> v(b * c * h * w);
  const std::size_t plane = h * w;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      double z = 0.0;
      for (std::size_t k = 0; k < c; ++k) z += (v[(n * c + k) * plane + i] = -std::log(uniform(rng, 1e-12, 1.0)));
      for (std::size_t k = 0; k < c; ++k) v[(n * c + k) * plane + i] /= z;
    }
  return autograd::Tensor({b, c, h, w}, std::move(v));
}

inline autograd::Tensor random_tensor(Rng& rng, autograd::Shape shape, double lo, double hi) {
  std::vector<double> v(autograd::numel(shape));
  for (double& x : v) x = uniform(rng, lo, hi);
  return autograd::Tensor(std::move(shape), std::move(v));
}

// The production init zeroes biases; on tiny nets that leaves pre-activations
// sitting exactly on relu kinks, where finite differences are meaningless.
inline autograd::ModelParams jitter_biases(autograd::ModelParams p, Rng& rng, double scale) {
  for (auto& [name, t] : p)
    if (name.ends_with(".b"))
      for (double& v : t.mutable_data()) v = uniform(rng, -scale, scale);
  return p;
}

inline pseudo::PixelMask random_mask(Rng& rng, std::size_t b, std::size_t h, std::size_t w, double p) {
  pseudo::PixelMask m(b, h, w);
  for (auto& v : m.values) v = coin(rng, p) ? 1 : 0;
  return m;
}

}  // namespace dualfete::oracles::detail
