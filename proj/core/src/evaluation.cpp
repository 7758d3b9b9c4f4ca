#include "dualfete/evaluation.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>

#include "dualfete/augment.hpp"
#include "dualfete/error.hpp"
#include "dualfete/metrics.hpp"
#include "dualfete/pseudo.hpp"
#include "dualfete/rng.hpp"

namespace dualfete::eval {
namespace {

std::vector<std::uint8_t> foreground(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] != 0;
  return out;
}

autograd::Tensor single_image(std::span<const double> image, std::size_t h, std::size_t w) {
  return autograd::Tensor({1, 1, h, w}, std::vector<double>(image.begin(), image.end()));
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace

std::size_t thread_count_from_env() {
  const char* env = std::getenv("DUALFETE_THREADS");
  if (env == nullptr) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return v > 0 ? static_cast<std::size_t>(v) : 1;
}

double SegScores::mean_dice() const {
  if (dice.empty()) return 0.0;
  return std::accumulate(dice.begin(), dice.end(), 0.0) / static_cast<double>(dice.size());
}

double SegScores::mean_hd95() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& h : hd95)
    if (h) {
      s += *h;
      ++n;
    }
  return n == 0 ? metrics::kHd95Missing : s / static_cast<double>(n);
}

SegScores score(const ModelParams& params, const segnet::NetConfig& net, std::span<const SegSample> samples,
                std::size_t threads) {
  SegScores out;
  out.dice.resize(samples.size());
  out.hd95.resize(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& s = samples[i];
    const auto probs = segnet::forward(params, net, single_image(s.image, s.height, s.width));
    const auto pred = foreground(pseudo::argmax_label(probs).values);
    const auto gt = foreground(s.label);
    out.dice[i] = metrics::dice(pred, gt);
    out.hd95[i] = metrics::hd95(pred, gt, s.height, s.width);
  });
  return out;
}

PseudoScores score_pseudo(const ModelParams& phi, const ModelParams& psi, const segnet::NetConfig& net,
                          std::span<const SegSample> samples, bool single, std::size_t threads) {
  PseudoScores out;
  if (samples.empty()) return out;
  std::vector<double> err(samples.size()), dis(samples.size()), fg(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& s = samples[i];
    const auto x = single_image(s.image, s.height, s.width);
    const auto p_phi = segnet::forward(phi, net, x);
    const auto bundle = single ? pseudo::single_teacher(p_phi) : pseudo::fuse_dual(p_phi, segnet::forward(psi, net, x));
    const auto fused = foreground(bundle.fused.values);
    err[i] = metrics::pl_error(fused, foreground(s.label));
    dis[i] = metrics::disagreement(foreground(bundle.label_phi.values), foreground(bundle.label_psi.values));
    fg[i] = static_cast<double>(std::accumulate(fused.begin(), fused.end(), std::size_t{0}));
  });
  const double n = static_cast<double>(samples.size());
  out.pl_error = std::accumulate(err.begin(), err.end(), 0.0) / n;
  out.disagreement = std::accumulate(dis.begin(), dis.end(), 0.0) / n;
  out.fg_fraction = std::accumulate(fg.begin(), fg.end(), 0.0) / (n * static_cast<double>(samples[0].pixels()));
  return out;
}

std::vector<PerturbedSample> perturbed_eval(const ModelParams& params, const segnet::NetConfig& net,
                                            std::span<const SegSample> test_set, std::size_t k_passes,
                                            Perturbation perturbation, std::uint64_t seed, std::size_t threads) {
  DUALFETE_REQUIRE(k_passes >= 2, "perturbed_eval: k_passes must be >= 2");
  DUALFETE_REQUIRE(perturbation != Perturbation::Dropout || net.dropout_rate > 0.0,
                   "perturbed_eval: dropout perturbation needs dropout_rate > 0");
  std::vector<PerturbedSample> out(test_set.size());
  parallel_for(test_set.size(), threads, [&](std::size_t i) {
    const auto& s = test_set[i];
    const auto& donor = test_set[(i + 1) % test_set.size()];
    std::vector<double> dices(k_passes), entropies(k_passes);
    for (std::size_t pass = 0; pass < k_passes; ++pass) {
      const std::uint64_t pass_seed = derive_seed(seed, i * k_passes + pass);
      std::vector<double> image = s.image;
      std::vector<std::uint8_t> gt = s.label;
      bool drop = false;
      if (perturbation == Perturbation::StrongAug) {
        Rng rng(pass_seed);
        auto view = data::strong_augment(s, donor, rng);
        gt = data::apply_positional_to_label<std::uint8_t>(view.spec, s.label, std::span<const std::uint8_t>(donor.label),
                                                           s.height, s.width);
        image = std::move(view.image);
      } else if (perturbation == Perturbation::Dropout) {
        drop = true;
      }
      const auto probs = segnet::forward(params, net, single_image(image, s.height, s.width), drop, pass_seed);
      dices[pass] = metrics::dice(foreground(pseudo::argmax_label(probs).values), foreground(gt));
      entropies[pass] = metrics::entropy_sum(probs)[0];
    }
    const auto [dm, ds] = mean_std(dices);
    const auto [em, es] = mean_std(entropies);
    out[i] = {dm, ds, em, es};
  });
  return out;
}

}  // namespace dualfete::eval
