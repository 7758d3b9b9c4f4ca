#include "dualfete/feedback.hpp"

#include <algorithm>
#include <cmath>

#include "dualfete/autograd.hpp"
#include "dualfete/error.hpp"
#include "dualfete/ops.hpp"

namespace dualfete::feedback {
namespace {

namespace ag = autograd;

constexpr double kMinProbeNorm = 1e-12;

GradientVector probe_direction(const GradientVector& grad, bool normalize, double& norm) {
  norm = ag::grad_norm(grad);
  if (normalize && norm > kMinProbeNorm) return ag::scale_grads(grad, 1.0 / norm);
  return grad;
}

}  // namespace

Tensor labeled_loss_tensor(const ModelParams& params, const segnet::NetConfig& net, const LabeledBatch& batch) {
  DUALFETE_REQUIRE(batch.labels.batch > 0, "labeled_loss: empty batch");
  const Tensor probs = segnet::forward(params, net, batch.images);
  return loss::cross_entropy(probs, batch.labels);
}

double labeled_loss(const ModelParams& params, const segnet::NetConfig& net, const LabeledBatch& batch) {
  return labeled_loss_tensor(params, net, batch).item();
}

ProbeResult probe_along(const ModelParams& student, const segnet::NetConfig& net, const LabeledBatch& batch,
                        const GradientVector& grad, double eta, bool normalize, std::optional<double> base_loss) {
  DUALFETE_REQUIRE(eta > 0.0, "probe: eta must be positive");
  ProbeResult r;
  r.eta = eta;
  const GradientVector dir = probe_direction(grad, normalize, r.grad_norm);
  r.normalized = normalize && r.grad_norm > kMinProbeNorm;
  if (r.grad_norm == 0.0) return r;  // zero step: delta is exactly 0
  const double before = base_loss ? *base_loss : labeled_loss(student, net, batch);
  const double after = labeled_loss(ag::axpy_params(student, dir, eta), net, batch);
  r.delta = before - after;
  return r;
}

GradientVector attributor_gradient(const ModelParams& student, const segnet::NetConfig& net,
                                   const Tensor& unlabeled_images, const LabelMap& targets,
                                   const PixelMask& attributor_mask) {
  ag::Tape tape;
  const ModelParams tracked = tape.watch(student);
  const Tensor probs = segnet::forward(tracked, net, unlabeled_images);
  return tape.backward(loss::seg_loss(probs, targets, &attributor_mask));
}

ProbeResult probe_delta(const ModelParams& student, const segnet::NetConfig& net, const LabeledBatch& labeled,
                        const Tensor& unlabeled_images, const LabelMap& targets, const PixelMask& attributor_mask,
                        double eta, bool normalize) {
  DUALFETE_REQUIRE(eta > 0.0, "probe: eta must be positive");
  const GradientVector g = attributor_gradient(student, net, unlabeled_images, targets, attributor_mask);
  return probe_along(student, net, labeled, g, eta, normalize);
}

Tensor feedback_loss_single(const Tensor& teacher_probs, const LabelMap& own_labels, double delta,
                            loss::Reduction reduction) {
  DUALFETE_REQUIRE(std::isfinite(delta), "feedback_loss_single: delta must be finite");
  return ag::mul_scalar(loss::masked_log_likelihood(teacher_probs, own_labels, nullptr, reduction), -delta);
}

Tensor feedback_loss_single(const ModelParams& teacher, const segnet::NetConfig& net, const Tensor& unlabeled_images,
                            double delta, loss::Reduction reduction) {
  const Tensor probs = segnet::forward(teacher, net, unlabeled_images);
  return feedback_loss_single(probs, pseudo::argmax_label(probs), delta, reduction);
}

Tensor feedback_loss_dual(const Tensor& teacher_probs, const LabelMap& own_labels, const FeedbackSignal& signal,
                          const PixelMask& receiver_agree, const PixelMask& receiver_disagree,
                          loss::Reduction reduction) {
  DUALFETE_REQUIRE(std::isfinite(signal.delta_agree) && std::isfinite(signal.delta_disagree),
                   "feedback_loss_dual: deltas must be finite");
  const Tensor ll_a = loss::masked_log_likelihood(teacher_probs, own_labels, &receiver_agree, reduction);
  const Tensor ll_d = loss::masked_log_likelihood(teacher_probs, own_labels, &receiver_disagree, reduction);
  return ag::add(ag::mul_scalar(ll_a, -signal.delta_agree), ag::mul_scalar(ll_d, -signal.delta_disagree));
}

std::vector<double> loss_change_map(const ModelParams& student, const segnet::NetConfig& net,
                                    const LabeledBatch& batch, const GradientVector& grad, double eta,
                                    bool normalize) {
  double norm = 0.0;
  const GradientVector dir = probe_direction(grad, normalize, norm);
  const Tensor before = segnet::forward(student, net, batch.images);
  const Tensor after = segnet::forward(ag::axpy_params(student, dir, eta), net, batch.images);
  const auto p0 = pseudo::label_probability(before, batch.labels);
  const auto p1 = pseudo::label_probability(after, batch.labels);
  std::vector<double> out(p0.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = std::clamp(p0[i], loss::kProbFloor, 1.0 - loss::kProbFloor);
    const double b = std::clamp(p1[i], loss::kProbFloor, 1.0 - loss::kProbFloor);
    out[i] = std::log(b) - std::log(a);  // -log a - (-log b)
  }
  return out;
}

}  // namespace dualfete::feedback
