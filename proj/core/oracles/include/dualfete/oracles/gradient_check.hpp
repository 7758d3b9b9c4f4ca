#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "dualfete/params.hpp"

namespace dualfete::oracles {

using autograd::ModelParams;
using autograd::Tensor;

// A scalar objective. Called once with tape-watched parameters (the result
// must sit on that tape) and many times with plain parameters.
using ScalarFn = std::function<Tensor(const ModelParams&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Relative error convention: |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double analytic, double numeric);

// Tape gradient against central differences with step `h` on every coordinate.
GradCheckReport check_gradient(const ModelParams& at, const ScalarFn& f, double h = 1e-5);

// Seeded composite instance. Even seeds push a small random segnet through
// one of the trainer's loss terms; odd seeds build a raw op chain that touches
// every primitive (strided conv, upsample, concat, exp/log, div, masked-sum,
// dropout, ...).
struct GradCheckCase {
  std::string description;
  ModelParams params;
  ScalarFn objective;
};
GradCheckCase random_case(std::uint64_t seed);

}  // namespace dualfete::oracles
