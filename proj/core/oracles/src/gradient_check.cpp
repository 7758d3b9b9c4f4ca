#include "dualfete/oracles/gradient_check.hpp"

#include <algorithm>
#include <cmath>

#include "dualfete/autograd.hpp"
#include "dualfete/error.hpp"
#include "dualfete/losses.hpp"
#include "dualfete/ops.hpp"
#include "dualfete/segnet.hpp"
#include "fixtures.hpp"

namespace dualfete::oracles {

namespace ag = autograd;

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

GradCheckReport check_gradient(const ModelParams& at, const ScalarFn& f, double h) {
  ag::Tape tape;
  const Tensor loss = f(tape.watch(at));
  DUALFETE_REQUIRE(loss.is_scalar(), "check_gradient: objective must be scalar");
  const auto grads = tape.backward(loss);

  GradCheckReport rep;
  ModelParams probe = at;
  for (const auto& [name, value] : at) {
    const Tensor& g = grads.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double x0 = value[i];
      probe.at(name).mutable_data()[i] = x0 + h;
      const double up = f(probe).item();
      probe.at(name).mutable_data()[i] = x0 - h;
      const double down = f(probe).item();
      probe.at(name).mutable_data()[i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(g[i], numeric);
      ++rep.coordinates;
      if (err > rep.max_rel_error || rep.worst_param.empty()) {
        rep.max_rel_error = err;
        rep.worst_param = name;
        rep.worst_index = i;
        rep.worst_analytic = g[i];
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

namespace {

GradCheckCase segnet_case(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x6C);
  segnet::NetConfig net;
  net.depth = static_cast<std::size_t>(uniform_int(rng, 1, 2));
  net.base_channels = static_cast<std::size_t>(uniform_int(rng, 1, 2));
  net.num_classes = static_cast<std::size_t>(uniform_int(rng, 2, 3));
  net.height = net.width = net.depth == 1 ? 6 : 8;
  net.dropout_rate = coin(rng) ? 0.3 : 0.0;
  const std::size_t b = 2, h = net.height, w = net.width, c = net.num_classes;

  const Tensor images = detail::random_tensor(rng, {b, 1, h, w}, 0.0, 1.0);
  pseudo::LabelMap labels(b, h, w);
  for (auto& v : labels.values) v = static_cast<std::uint8_t>(uniform_int(rng, 0, static_cast<std::int64_t>(c) - 1));
  const auto mask = detail::random_mask(rng, b, h, w, 0.6);
  const auto mask2 = detail::random_mask(rng, b, h, w, 0.4);
  const Tensor soft = detail::random_simplex(rng, b, c, h, w);
  const std::uint64_t drop_seed = rng();
  const feedback::FeedbackSignal signal{uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), 0.1, false, 0.0, 0.0};

  GradCheckCase out;
  out.params = detail::jitter_biases(segnet::build(net, seed), rng, 0.3);
  auto probs = [=](const ModelParams& p) { return segnet::forward(p, net, images, true, drop_seed); };
  switch (uniform_int(rng, 0, 3)) {
    case 0:
      out.description = "segnet + masked seg_loss";
      out.objective = [=](const ModelParams& p) { return loss::seg_loss(probs(p), labels, &mask); };
      break;
    case 1:
      out.description = "segnet + soft-target seg_loss";
      out.objective = [=](const ModelParams& p) { return loss::seg_loss_soft(probs(p), soft, &mask); };
      break;
    case 2:
      out.description = "segnet + dual feedback loss";
      out.objective = [=](const ModelParams& p) {
        return feedback::feedback_loss_dual(probs(p), labels, signal, mask, mask2, loss::Reduction::Mean);
      };
      break;
    default:
      out.description = "segnet + summed log-likelihood";
      out.objective = [=](const ModelParams& p) {
        return loss::masked_log_likelihood(probs(p), labels, &mask, loss::Reduction::Sum);
      };
      break;
  }
  out.description += " (depth " + std::to_string(net.depth) + ", base " + std::to_string(net.base_channels) +
                     ", C=" + std::to_string(c) + ")";
  return out;
}

GradCheckCase op_chain_case(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x6D);
  const std::size_t b = 2, ci = 2, h = 6, w = 6, cm = 3, c = 2;
  GradCheckCase out;
  out.description = "raw op chain";
  out.params.insert("x", detail::random_tensor(rng, {b, ci, h, w}, -1.0, 1.0));
  out.params.insert("w1", detail::random_tensor(rng, {cm, ci, 3, 3}, -0.6, 0.6));
  out.params.insert("b1", detail::random_tensor(rng, {cm}, -0.2, 0.2));
  out.params.insert("w2", detail::random_tensor(rng, {c, cm + ci, 3, 3}, -0.6, 0.6));
  out.params.insert("b2", detail::random_tensor(rng, {c}, -0.2, 0.2));
  out.params.insert("s", detail::random_tensor(rng, {b, c, h, w}, 0.5, 1.5));

  std::vector<double> m(b * c * h * w);
  for (double& v : m) v = coin(rng, 0.7) ? 1.0 : 0.0;
  const Tensor mask({b, c, h, w}, std::move(m));
  const std::uint64_t drop_seed = rng();

  out.objective = [=](const ModelParams& p) {
    using namespace ag;
    Tensor z = relu(conv2d(p.at("x"), p.at("w1"), p.at("b1"), 2, 1));
    z = dropout(upsample_nearest2x(z), 0.25, drop_seed);
    z = conv2d(concat_channels(z, p.at("x")), p.at("w2"), p.at("b2"), 1, 1);
    const Tensor probs = softmax_channels(z);
    const Tensor ratio = div(exp(mul_scalar(z, 0.5)), add_scalar(p.at("s"), 0.25));
    const Tensor logs = log(clamp(add_scalar(probs, 0.1), 0.0, 10.0));
    const Tensor mix = sub(mul(ratio, logs), mul(probs, p.at("s")));
    return add(masked_sum(mix, mask), mul_scalar(mean(add(ratio, probs)), 0.5));
  };
  return out;
}

}  // namespace

GradCheckCase random_case(std::uint64_t seed) { return seed % 2 == 0 ? segnet_case(seed) : op_chain_case(seed); }

}  // namespace dualfete::oracles
