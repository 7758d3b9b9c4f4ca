#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dualfete/params.hpp"
#include "dualfete/segnet.hpp"
#include "dualfete/synthdata.hpp"

namespace dualfete::eval {

using autograd::ModelParams;
using data::SegSample;

// Evaluation parallelism from DUALFETE_THREADS (default 1, minimum 1).
std::size_t thread_count_from_env();

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots so the outcome does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn);

struct SegScores {
  std::vector<double> dice;                 // foreground Dice per sample
  std::vector<std::optional<double>> hd95;  // per sample, nullopt when undefined

  double mean_dice() const;
  // Mean over defined values; metrics::kHd95Missing when none is defined.
  double mean_hd95() const;
};

// Foreground Dice / hd95 of the model's argmax prediction against sample labels.
SegScores score(const ModelParams& params, const segnet::NetConfig& net, std::span<const SegSample> samples,
                std::size_t threads = 1);

// Quality of the teachers' pseudo-labels on (unaugmented) samples, averaged
// per image. With `single` set only phi labels the data.
struct PseudoScores {
  double pl_error = 0.0;      // 1 - Dice(fused, gt)
  double disagreement = 0.0;  // 1 - Dice(phi, psi)
  double fg_fraction = 0.0;   // share of fused pixels labeled foreground
};
PseudoScores score_pseudo(const ModelParams& phi, const ModelParams& psi, const segnet::NetConfig& net,
                          std::span<const SegSample> samples, bool single = false, std::size_t threads = 1);

enum class Perturbation { None, StrongAug, Dropout };

struct PerturbedSample {
  double dice_mean = 0.0;
  double dice_std = 0.0;
  double entropy_mean = 0.0;
  double entropy_std = 0.0;
};

// k seeded stochastic passes per test sample. StrongAug scores against the
// positionally transformed ground truth (the next sample is the paste donor);
// Dropout needs net.dropout_rate > 0. Standard deviations are population ones.
std::vector<PerturbedSample> perturbed_eval(const ModelParams& params, const segnet::NetConfig& net,
                                            std::span<const SegSample> test_set, std::size_t k_passes,
                                            Perturbation perturbation, std::uint64_t seed, std::size_t threads = 1);

}  // namespace dualfete::eval

#include <thread>

namespace dualfete::eval {

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
}

}  // namespace dualfete::eval
