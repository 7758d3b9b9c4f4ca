#include "dualfete/oracles/bilevel_oracle.hpp"

#include <cmath>

#include "dualfete/autograd.hpp"
#include "dualfete/error.hpp"
#include "dualfete/losses.hpp"
#include "fixtures.hpp"

namespace dualfete::oracles {

namespace ag = autograd;

namespace {

constexpr std::size_t kTeacherPrefit = 150;
constexpr double kPrefitLr = 0.1;

ModelParams prefit(ModelParams p, const segnet::NetConfig& net, const feedback::LabeledBatch& batch, std::size_t steps) {
  auto velocity = ag::zeros_like(p);
  for (std::size_t i = 0; i < steps; ++i) {
    ag::Tape tape;
    const auto g = tape.backward(loss::seg_loss(segnet::forward(tape.watch(p), net, batch.images), batch.labels));
    auto r = ag::sgd_step(p, g, velocity, kPrefitLr, 0.9, 0.0);
    p = std::move(r.params);
    velocity = std::move(r.velocity);
  }
  return p;
}

GradientVector inner_gradient(const BilevelInstance& inst, const Tensor& soft_targets) {
  ag::Tape tape;
  const auto s = tape.watch(inst.student);
  return tape.backward(loss::cross_entropy_soft(segnet::forward(s, inst.net, inst.unlabeled), soft_targets));
}

}  // namespace

BilevelInstance bilevel_instance(std::uint64_t seed) {
  BilevelInstance inst;
  inst.net.height = inst.net.width = 8;
  inst.net.base_channels = 2;
  inst.net.depth = 1;
  const auto samples = data::generate_dataset(derive_seed(seed, 11), 8, 8, 8, 0.3);
  inst.labeled = detail::labeled_batch(std::span(samples).subspan(0, 4));
  inst.unlabeled = data::stack_images(std::span(samples).subspan(4, 2));
  inst.teacher = prefit(segnet::build(inst.net, derive_seed(seed, 12)), inst.net, inst.labeled, kTeacherPrefit);
  inst.student = segnet::build(inst.net, derive_seed(seed, 13));
  return inst;
}

double bilevel_objective(const BilevelInstance& inst, const ModelParams& teacher) {
  const Tensor targets = segnet::forward(teacher, inst.net, inst.unlabeled);
  const auto moved = ag::axpy_params(inst.student, inner_gradient(inst, targets), inst.eta);
  return feedback::labeled_loss(moved, inst.net, inst.labeled);
}

GradientVector bilevel_oracle(const BilevelInstance& inst, double fd_step) {
  DUALFETE_REQUIRE(inst.teacher.total_elements() <= kBilevelMaxParams,
                   "bilevel_oracle: teacher has " + std::to_string(inst.teacher.total_elements()) +
                       " parameters, limit is " + std::to_string(kBilevelMaxParams));
  GradientVector out;
  ModelParams probe = inst.teacher;
  for (const auto& [name, value] : inst.teacher) {
    std::vector<double> g(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double x0 = value[i];
      probe.at(name).mutable_data()[i] = x0 + fd_step;
      const double up = bilevel_objective(inst, probe);
      probe.at(name).mutable_data()[i] = x0 - fd_step;
      const double down = bilevel_objective(inst, probe);
      probe.at(name).mutable_data()[i] = x0;
      g[i] = (up - down) / (2.0 * fd_step);
    }
    out.insert(name, Tensor(value.shape(), std::move(g)));
  }
  return out;
}

FeedbackGradient feedback_gradient(const BilevelInstance& inst) {
  FeedbackGradient out;
  out.delta = feedback::labeled_loss(inst.student, inst.net, inst.labeled) - bilevel_objective(inst, inst.teacher);
  ag::Tape tape;
  const Tensor probs = segnet::forward(tape.watch(inst.teacher), inst.net, inst.unlabeled);
  out.grad = tape.backward(feedback::feedback_loss_single(probs, pseudo::argmax_label(probs), out.delta));
  return out;
}

BilevelComparison compare_bilevel(const BilevelInstance& inst, double fd_step) {
  const auto oracle = bilevel_oracle(inst, fd_step);
  const auto coarse = bilevel_oracle(inst, 2.0 * fd_step);
  const auto fb = feedback_gradient(inst);
  BilevelComparison out;
  out.delta = fb.delta;
  for (const auto& [name, g] : oracle) {
    const Tensor& c = coarse.at(name);
    const Tensor& f = fb.grad.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ++out.coordinates;
      if (std::abs(g[i]) <= 10.0 * std::abs(g[i] - c[i]) || g[i] == 0.0) continue;
      ++out.above_noise;
      if ((g[i] > 0.0) == (f[i] > 0.0) && f[i] != 0.0) ++out.agree;
    }
  }
  return out;
}

}  // namespace dualfete::oracles
