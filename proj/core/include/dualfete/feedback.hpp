#pragma once

#include <optional>

#include "dualfete/losses.hpp"
#include "dualfete/params.hpp"
#include "dualfete/pseudo.hpp"
#include "dualfete/segnet.hpp"

namespace dualfete::feedback {

using autograd::GradientVector;
using autograd::ModelParams;
using autograd::Tensor;
using pseudo::LabelMap;
using pseudo::PixelMask;

struct LabeledBatch {
  Tensor images;    // (B, 1, H, W)
  LabelMap labels;  // (B, H, W)
};

// Mean pixel cross-entropy of the network on a labeled batch (every sample
// has the same pixel count, so this equals the mean of per-sample means).
double labeled_loss(const ModelParams& params, const segnet::NetConfig& net, const LabeledBatch& batch);
// Same quantity recorded on the tape of `params`.
Tensor labeled_loss_tensor(const ModelParams& params, const segnet::NetConfig& net, const LabeledBatch& batch);

struct ProbeResult {
  double delta = 0.0;
  double grad_norm = 0.0;  // norm of the raw probe gradient
  double eta = 0.0;
  bool normalized = false;
};

// Virtual one-step probe along a precomputed gradient:
//   delta = L_l(theta) - L_l(theta - eta * d),  d = grad or grad / |grad|.
// Normalization is skipped when |grad| <= 1e-12. `base_loss` may carry a
// cached L_l(theta) for the same batch. The student is not modified.
ProbeResult probe_along(const ModelParams& student, const segnet::NetConfig& net, const LabeledBatch& batch,
                        const GradientVector& grad, double eta, bool normalize,
                        std::optional<double> base_loss = std::nullopt);

// Gradient of seg_loss(student(images), targets, attributor_mask) w.r.t. the student.
GradientVector attributor_gradient(const ModelParams& student, const segnet::NetConfig& net,
                                   const Tensor& unlabeled_images, const LabelMap& targets,
                                   const PixelMask& attributor_mask);

// Full probe: attributor gradient followed by probe_along.
ProbeResult probe_delta(const ModelParams& student, const segnet::NetConfig& net, const LabeledBatch& labeled,
                        const Tensor& unlabeled_images, const LabelMap& targets, const PixelMask& attributor_mask,
                        double eta, bool normalize);

struct FeedbackSignal {
  double delta_agree = 0.0;
  double delta_disagree = 0.0;
  double eta = 0.0;
  bool normalized = false;
  double grad_norm_agree = 0.0;
  double grad_norm_disagree = 0.0;
};

// -delta * log P(own argmax labels) over every pixel. `probs` must be on the
// teacher's tape for the gradient to reach it.
Tensor feedback_loss_single(const Tensor& teacher_probs, const LabelMap& own_labels, double delta,
                            loss::Reduction reduction = loss::Reduction::Mean);
Tensor feedback_loss_single(const ModelParams& teacher, const segnet::NetConfig& net, const Tensor& unlabeled_images,
                            double delta, loss::Reduction reduction = loss::Reduction::Mean);

// -delta_a * log P(own labels | agree receiver) - delta_d * log P(own labels | disagree receiver)
Tensor feedback_loss_dual(const Tensor& teacher_probs, const LabelMap& own_labels, const FeedbackSignal& signal,
                          const PixelMask& receiver_agree, const PixelMask& receiver_disagree,
                          loss::Reduction reduction = loss::Reduction::Mean);

// Per-pixel change of labeled cross-entropy, CE(theta) - CE(theta - eta * d),
// shaped (B, H, W) like the labeled batch. Positive where the probe step helps.
std::vector<double> loss_change_map(const ModelParams& student, const segnet::NetConfig& net,
                                    const LabeledBatch& batch, const GradientVector& grad, double eta,
                                    bool normalize);

}  // namespace dualfete::feedback
