#include <benchmark/benchmark.h>

#include "dualfete/autograd.hpp"
#include "dualfete/losses.hpp"
#include "dualfete/metrics.hpp"
#include "dualfete/ops.hpp"
#include "dualfete/segnet.hpp"
#include "dualfete/suites.hpp"
#include "dualfete/synthdata.hpp"
#include "dualfete/trainer.hpp"

using namespace dualfete;
namespace ag = dualfete::autograd;

namespace {

ag::Tensor filled(ag::Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = uniform(rng, -1.0, 1.0);
  return ag::Tensor(std::move(shape), std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = filled({8, c, 16, 16}, 1);
  const auto w = filled({c, c, 3, 3}, 2);
  const auto b = filled({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ag::conv2d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2dForward)->Arg(4)->Arg(8)->Arg(16);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  ag::ModelParams p;
  p.insert("x", filled({8, c, 16, 16}, 1));
  p.insert("w", filled({c, c, 3, 3}, 2));
  p.insert("b", filled({c}, 3));
  for (auto _ : state) {
    ag::Tape tape;
    const auto t = tape.watch(p);
    benchmark::DoNotOptimize(tape.backward(ag::sum(ag::conv2d(t.at("x"), t.at("w"), t.at("b"), 1, 1))));
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(4)->Arg(8)->Arg(16);

void BM_SegnetForwardBackward(benchmark::State& state) {
  const segnet::NetConfig net{};
  const auto params = segnet::build(net, 1);
  const auto samples = data::generate_dataset(1, 8, net.height, net.width, 0.6);
  const auto x = data::stack_images(samples);
  pseudo::LabelMap y(8, net.height, net.width);
  for (std::size_t b = 0; b < 8; ++b)
    std::copy(samples[b].label.begin(), samples[b].label.end(), y.values.begin() + b * y.plane());
  for (auto _ : state) {
    ag::Tape tape;
    benchmark::DoNotOptimize(tape.backward(loss::seg_loss(segnet::forward(tape.watch(params), net, x), y)));
  }
}
BENCHMARK(BM_SegnetForwardBackward);

void BM_TrainStep(benchmark::State& state) {
  train::TrainConfig c = suites::desk_config();
  c.mode = static_cast<train::Mode>(state.range(0));
  const auto corpus = train::make_corpus(c);
  auto s = train::init_state(c);
  const std::span<const data::SegSample> lab(corpus.train.labeled.data(), c.batch_labeled);
  const std::span<const data::SegSample> unl(corpus.train.unlabeled.data(), c.batch_unlabeled);
  std::size_t t = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train::train_step(s, c, lab, unl, t++ % c.steps));
  state.SetLabel(train::to_string(c.mode));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(train::Mode::FullySupervised))
    ->Arg(static_cast<int>(train::Mode::DualNoFeedback))
    ->Arg(static_cast<int>(train::Mode::DualFete))
    ->Unit(benchmark::kMillisecond);

void BM_Hd95(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<std::uint8_t> a(side * side), b(side * side);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = coin(rng, 0.3), b[i] = coin(rng, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::hd95(a, b, side, side));
}
BENCHMARK(BM_Hd95)->Arg(16)->Arg(64);

}  // namespace
BENCHMARK_MAIN();
