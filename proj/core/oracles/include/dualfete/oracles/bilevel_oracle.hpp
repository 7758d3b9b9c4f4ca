#pragma once

#include <cstdint>

#include "dualfete/feedback.hpp"
#include "dualfete/segnet.hpp"

namespace dualfete::oracles {

using autograd::GradientVector;
using autograd::ModelParams;
using autograd::Tensor;

inline constexpr std::size_t kBilevelMaxParams = 2000;

// One teacher / student pair on tiny images. The unlabeled loss uses the
// teacher's probabilities as soft targets so the one-step composite
//   J(teacher) = L_l(student - eta * grad_student CE(student(x_u), teacher(x_u)))
// is differentiable in the teacher.
struct BilevelInstance {
  segnet::NetConfig net;
  ModelParams teacher;
  ModelParams student;
  feedback::LabeledBatch labeled;
  Tensor unlabeled;
  double eta = 0.1;
};

// Teacher pre-fitted on labeled data (confident, mostly right), student
// freshly initialised (uncertain). Unlabeled images come from the same
// generator as the labeled ones.
BilevelInstance bilevel_instance(std::uint64_t seed);

double bilevel_objective(const BilevelInstance& inst, const ModelParams& teacher);

// Central differences of J over every teacher coordinate. Throws
// ContractViolation when the teacher exceeds kBilevelMaxParams.
GradientVector bilevel_oracle(const BilevelInstance& inst, double fd_step);

// delta = L_l(student) - J(teacher), i.e. the probe with soft targets, and
// the teacher gradient of -delta * mean log p(argmax labels).
struct FeedbackGradient {
  double delta = 0.0;
  GradientVector grad;
};
FeedbackGradient feedback_gradient(const BilevelInstance& inst);

struct BilevelComparison {
  std::size_t coordinates = 0;
  std::size_t above_noise = 0;
  std::size_t agree = 0;
  double delta = 0.0;
  double agreement() const { return above_noise == 0 ? 0.0 : static_cast<double>(agree) / above_noise; }
};

// A coordinate counts when |oracle| exceeds 10x its own noise estimate, the
// gap between differences at fd_step and 2 * fd_step.
BilevelComparison compare_bilevel(const BilevelInstance& inst, double fd_step = 1e-4);

}  // namespace dualfete::oracles
