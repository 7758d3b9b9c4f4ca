#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dualfete/feedback.hpp"

namespace dualfete::oracles {

// For one seeded student / labeled batch / pseudo-labeled batch, the residual
//   r(eta) = |delta(eta) - eta * <grad L_l(theta - eta * d), d>|
// at each step size. The bracket is the first-order expansion of the labeled
// loss around the probed point, so r shrinks like eta^2.
//
// Draws whose probe segment switches a relu are rejected before any residual
// is computed (the expansion assumes a smooth loss); `attempts` counts draws.
struct TaylorInstance {
  std::uint64_t seed = 0;
  bool normalized = false;
  std::size_t attempts = 0;
  autograd::ModelParams student;
  autograd::GradientVector grad;       // raw probe gradient
  autograd::GradientVector direction;  // grad, or grad / |grad|
  feedback::LabeledBatch labeled;
  std::vector<double> etas;
  std::vector<double> deltas;
  std::vector<double> residuals;
  // log2(r(eta_i) / r(eta_{i+1})) for consecutive halvings.
  std::vector<double> orders;
  double min_order() const;
};

inline constexpr std::array<double, 3> kTaylorEtas{1e-2, 5e-3, 2.5e-3};

// `normalize` probes along the unit gradient instead; the step is then a
// fixed length and crosses relu kinks far more often on tiny nets.
TaylorInstance taylor_instance(std::uint64_t seed, bool normalize = false, std::span<const double> etas = kTaylorEtas);

}  // namespace dualfete::oracles
