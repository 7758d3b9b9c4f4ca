#include "dualfete/oracles/taylor_check.hpp"

#include <algorithm>
#include <cmath>

#include "dualfete/autograd.hpp"
#include "dualfete/error.hpp"
#include "dualfete/feedback.hpp"
#include "dualfete/ops.hpp"
#include "dualfete/segnet.hpp"
#include "fixtures.hpp"

namespace dualfete::oracles {

namespace ag = autograd;
using ag::GradientVector;
using ag::ModelParams;
using ag::Tensor;

namespace {

constexpr std::size_t kSegmentPoints = 16;
constexpr std::size_t kMaxAttempts = 64;

// Signs of every relu pre-activation in the segnet forward, layer by layer.
std::vector<bool> relu_pattern(const ModelParams& p, const segnet::NetConfig& net, const Tensor& images) {
  std::vector<bool> out;
  auto layer = [&](const std::string& name, const Tensor& x, std::size_t stride) {
    const Tensor& w = p.at(name + ".w");
    const Tensor z = ag::conv2d(x, w, p.at(name + ".b"), stride, w.dim(2) / 2);
    for (double v : z.data()) out.push_back(v > 0.0);
    return ag::relu(z);
  };
  std::vector<Tensor> skips;
  Tensor x = layer("enc0", images, 1);
  for (std::size_t i = 1; i <= net.depth; ++i) {
    skips.push_back(x);
    x = layer("down" + std::to_string(i), x, 2);
  }
  x = layer("bottleneck", x, 1);
  for (std::size_t i = net.depth; i-- > 0;)
    x = layer("up" + std::to_string(i), ag::concat_channels(ag::upsample_nearest2x(x), skips[i]), 1);
  return out;
}

// The expansion only holds where the labeled loss is smooth along the probe
// segment, i.e. no relu switches between theta and theta - eta_max * d.
bool smooth_segment(const ModelParams& student, const GradientVector& d, double eta_max,
                    const segnet::NetConfig& net, const Tensor& images) {
  const auto base = relu_pattern(student, net, images);
  for (std::size_t k = 1; k <= kSegmentPoints; ++k) {
    const double t = eta_max * static_cast<double>(k) / kSegmentPoints;
    if (relu_pattern(ag::axpy_params(student, d, t), net, images) != base) return false;
  }
  return true;
}

}  // namespace

double TaylorInstance::min_order() const {
  return orders.empty() ? 0.0 : *std::min_element(orders.begin(), orders.end());
}

TaylorInstance taylor_instance(std::uint64_t seed, bool normalize, std::span<const double> etas) {
  DUALFETE_REQUIRE(etas.size() >= 2, "taylor_instance: need at least two step sizes");
  segnet::NetConfig net;
  net.height = net.width = 8;
  net.base_channels = 2;
  net.depth = 1;

  const double eta_max = *std::max_element(etas.begin(), etas.end());

  TaylorInstance out;
  out.seed = seed;
  out.normalized = normalize;
  for (;;) {
    DUALFETE_REQUIRE(out.attempts < kMaxAttempts, "taylor_instance: no kink-free draw for seed " + std::to_string(seed));
    const std::uint64_t draw = derive_seed(seed, out.attempts++);
    const auto samples = data::generate_dataset(derive_seed(draw, 1), 5, net.height, net.width, 0.5);
    out.labeled = detail::labeled_batch(std::span(samples).subspan(0, 2));
    const auto unlabeled = data::stack_images(std::span(samples).subspan(2));

    Rng rng = make_rng(draw, 4);
    out.student = detail::jitter_biases(segnet::build(net, derive_seed(draw, 2)), rng, 0.3);
    const auto teacher = detail::jitter_biases(segnet::build(net, derive_seed(draw, 3)), rng, 0.3);
    const auto targets = pseudo::argmax_label(segnet::forward(teacher, net, unlabeled));
    const auto mask = detail::random_mask(rng, targets.batch, targets.height, targets.width, 0.5);

    out.grad = feedback::attributor_gradient(out.student, net, unlabeled, targets, mask);
    const double norm = ag::grad_norm(out.grad);
    out.direction = normalize && norm > 1e-12 ? ag::scale_grads(out.grad, 1.0 / norm) : out.grad;
    if (smooth_segment(out.student, out.direction, eta_max, net, out.labeled.images)) break;
  }
  const auto& student = out.student;
  const auto& grad = out.grad;
  const auto& d = out.direction;
  const auto& labeled = out.labeled;

  for (double eta : etas) {
    const double delta = feedback::probe_along(student, net, labeled, grad, eta, out.normalized).delta;
    ag::Tape tape;
    const auto moved = tape.watch(ag::axpy_params(student, d, eta));
    const auto g_moved = tape.backward(feedback::labeled_loss_tensor(moved, net, labeled));
    out.etas.push_back(eta);
    out.deltas.push_back(delta);
    out.residuals.push_back(std::abs(delta - eta * ag::dot(g_moved, d)));
  }
  for (std::size_t i = 0; i + 1 < out.residuals.size(); ++i)
    out.orders.push_back(std::log2(out.residuals[i] / out.residuals[i + 1]) /
                         std::log2(out.etas[i] / out.etas[i + 1]));
  return out;
}

}  // namespace dualfete::oracles
