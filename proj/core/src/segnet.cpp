#include "dualfete/segnet.hpp"

#include <cmath>
#include <string>

#include "dualfete/error.hpp"
#include "dualfete/ops.hpp"
#include "dualfete/rng.hpp"

namespace dualfete::segnet {
namespace {

namespace ag = autograd;

std::size_t channels_at(const NetConfig& c, std::size_t level) { return c.base_channels << level; }

struct Layer {
  std::string name;
  std::size_t cin, cout, k;
};

std::vector<Layer> layers(const NetConfig& c) {
  std::vector<Layer> out;
  out.push_back({"enc0", 1, channels_at(c, 0), 3});
  for (std::size_t i = 1; i <= c.depth; ++i)
    out.push_back({"down" + std::to_string(i), channels_at(c, i - 1), channels_at(c, i), 3});
  out.push_back({"bottleneck", channels_at(c, c.depth), channels_at(c, c.depth), 3});
  for (std::size_t i = c.depth; i-- > 0;)
    out.push_back({"up" + std::to_string(i), channels_at(c, i + 1) + channels_at(c, i), channels_at(c, i), 3});
  out.push_back({"head", channels_at(c, 0), c.num_classes, 1});
  return out;
}

Tensor conv(const ModelParams& p, const std::string& name, const Tensor& x, std::size_t stride) {
  const Tensor& w = p.at(name + ".w");
  return ag::conv2d(x, w, p.at(name + ".b"), stride, w.dim(2) / 2);
}

}  // namespace

void NetConfig::validate() const {
  DUALFETE_REQUIRE(num_classes >= 2, "NetConfig: num_classes must be >= 2");
  DUALFETE_REQUIRE(base_channels >= 1, "NetConfig: base_channels must be >= 1");
  DUALFETE_REQUIRE(depth >= 1 && depth <= 6, "NetConfig: depth must be in [1, 6]");
  const std::size_t f = std::size_t{1} << depth;
  DUALFETE_REQUIRE(height > 0 && width > 0 && height % f == 0 && width % f == 0,
                   "NetConfig: input size must be divisible by 2^depth = " + std::to_string(f));
  DUALFETE_REQUIRE(dropout_rate >= 0.0 && dropout_rate < 1.0, "NetConfig: dropout_rate must be in [0, 1)");
}

ModelParams build(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed, 0x5E6E7);
  ModelParams params;
  for (const auto& l : layers(config)) {
    const std::size_t fan_in = l.cin * l.k * l.k;
    const double w_std = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> w(l.cout * fan_in);
    for (double& v : w) v = w_std * normal(rng);
    std::vector<double> b(l.cout, 0.0);
    params.insert(l.name + ".w", Tensor({l.cout, l.cin, l.k, l.k}, std::move(w)));
    params.insert(l.name + ".b", Tensor({l.cout}, std::move(b)));
  }
  return params;
}

std::size_t parameter_count(const NetConfig& config) {
  std::size_t n = 0;
  for (const auto& l : layers(config)) n += l.cout * l.cin * l.k * l.k + l.cout;
  return n;
}

Tensor forward(const ModelParams& params, const NetConfig& config, const Tensor& images, bool dropout_on,
               std::uint64_t seed) {
  DUALFETE_REQUIRE(images.rank() == 4 && images.dim(1) == 1 && images.dim(2) == config.height &&
                       images.dim(3) == config.width,
                   "segnet::forward: expected images (B, 1, " + std::to_string(config.height) + ", " +
                       std::to_string(config.width) + "), got " + autograd::to_string(images.shape()));
  std::vector<Tensor> skips;
  Tensor x = ag::relu(conv(params, "enc0", images, 1));
  for (std::size_t i = 1; i <= config.depth; ++i) {
    skips.push_back(x);
    x = ag::relu(conv(params, "down" + std::to_string(i), x, 2));
  }
  x = ag::relu(conv(params, "bottleneck", x, 1));
  if (dropout_on && config.dropout_rate > 0.0) x = ag::dropout(x, config.dropout_rate, seed);
  for (std::size_t i = config.depth; i-- > 0;) {
    x = ag::concat_channels(ag::upsample_nearest2x(x), skips[i]);
    x = ag::relu(conv(params, "up" + std::to_string(i), x, 1));
  }
  return ag::softmax_channels(conv(params, "head", x, 1));
}

NetConfig infer_config(const ModelParams& params, std::size_t height, std::size_t width) {
  NetConfig c;
  c.height = height;
  c.width = width;
  DUALFETE_REQUIRE(params.contains("enc0.w") && params.contains("head.w"), "infer_config: not a segnet parameter set");
  c.base_channels = params.at("enc0.w").dim(0);
  c.num_classes = params.at("head.w").dim(0);
  c.depth = 0;
  while (params.contains("down" + std::to_string(c.depth + 1) + ".w")) ++c.depth;
  c.validate();
  const auto expected = build(c, 0);
  DUALFETE_REQUIRE(expected.same_layout(params), "infer_config: tensor layout does not match a segnet");
  return c;
}

}  // namespace dualfete::segnet
