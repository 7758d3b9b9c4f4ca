// dualfete command-line entry point.
//
// Exit codes: 0 success, 1 runtime failure (or a failed selftest), 2 bad
// configuration or arguments, 3 training aborted on a non-finite loss.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualfete/config.hpp"
#include "dualfete/dataset_io.hpp"
#include "dualfete/error.hpp"
#include "dualfete/evaluation.hpp"
#include "dualfete/metrics.hpp"
#include "dualfete/oracles/selftest.hpp"
#include "dualfete/segnet.hpp"
#include "dualfete/suites.hpp"
#include "dualfete/synthdata.hpp"
#include "dualfete/trainer.hpp"

namespace fs = std::filesystem;
using namespace dualfete;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNonFinite = 3;

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hostname() {
  char host[256] = {};
  gethostname(host, sizeof host - 1);
  return host;
}

void write_meta(const fs::path& dir, json meta) {
  meta["host"] = hostname();
  meta["finished"] = timestamp();
  meta["eval_threads"] = eval::thread_count_from_env();
  std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  train::TrainConfig config = train::load_config(a.config);
  if (a.seed) config.seed = *a.seed;
  config.validate();
  const std::string started = timestamp();
  const auto corpus = train::make_corpus(config);
  const auto state = train::train(config, corpus);
  train::write_run(a.out, state, config, corpus);
  write_meta(a.out, {{"command", "train"}, {"started", started}, {"config", a.config}});
  const auto& last = state.history.back().values;
  std::cerr << "step " << state.step << ": student dice " << last.at("dice_test_student") << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string perturb;
  std::size_t k = 6;
  std::size_t n_test = 50;
  std::size_t size = 16;
  double ambiguity = 0.6;
  double dropout_rate = 0.2;
  std::uint64_t seed = 0;
};

std::vector<data::SegSample> eval_samples(const EvalArgs& a) {
  const std::string prefix = "synthetic:";
  if (a.data.starts_with(prefix)) {
    const std::uint64_t seed = std::stoull(a.data.substr(prefix.size()));
    return data::generate_dataset(seed, a.n_test, a.size, a.size, a.ambiguity);
  }
  std::vector<data::SegSample> all, test;
  for (auto& e : data::import_dataset(a.data)) {
    if (e.split == data::Split::Test) test.push_back(e.sample);
    all.push_back(std::move(e.sample));
  }
  // A directory without a test split is scored in full.
  return test.empty() ? all : test;
}

int cmd_eval(const EvalArgs& a) {
  const auto params = segnet::load_checkpoint(a.checkpoint);
  const auto samples = eval_samples(a);
  if (samples.empty()) throw std::runtime_error("no samples to evaluate in " + a.data);
  segnet::NetConfig net = segnet::infer_config(params, samples[0].height, samples[0].width);
  const std::size_t threads = eval::thread_count_from_env();

  const auto scores = eval::score(params, net, samples, threads);
  json out{{"checkpoint", a.checkpoint},
           {"data", a.data},
           {"samples", samples.size()},
           {"dice", scores.mean_dice()},
           {"hd95", scores.mean_hd95()}};

  if (!a.perturb.empty()) {
    auto kind = eval::Perturbation::StrongAug;
    if (a.perturb == "dropout") {
      kind = eval::Perturbation::Dropout;
      net.dropout_rate = a.dropout_rate;
    }
    const auto ps = eval::perturbed_eval(params, net, samples, a.k, kind, a.seed, threads);
    double dm = 0, ds = 0, em = 0, es = 0;
    for (const auto& p : ps) dm += p.dice_mean, ds += p.dice_std, em += p.entropy_mean, es += p.entropy_std;
    const double n = static_cast<double>(ps.size());
    out["perturbation"] = {{"kind", a.perturb},
                           {"k", a.k},
                           {"dice_mean", dm / n},
                           {"dice_std", ds / n},
                           {"entropy_mean", em / n},
                           {"entropy_std", es / n}};
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct SuiteArgs {
  std::string name;
  std::string out;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::optional<std::size_t> steps;
  bool quiet = false;
};

int cmd_suite(const SuiteArgs& a) {
  suites::SuiteOptions o;
  o.seeds = a.seeds;
  o.steps = a.steps;
  o.quiet = a.quiet;
  const auto r = suites::run_suite(a.name, a.out, o);
  std::cerr << r.name << ": " << r.runs.size() << " runs, summary at " << (fs::path(a.out) / "summary.csv").string()
            << "\n";
  return 0;
}

int cmd_selftest() {
  const auto results = oracles::run_selftest(&std::cout);
  const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  return ok ? 0 : kExitFailure;
}

struct GenArgs {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double ambiguity = 0.6;
  std::string out;
  std::size_t size = 16;
  double labeled_ratio = 0.05;
  double test_fraction = 0.2;
};

int cmd_gen_data(const GenArgs& a) {
  auto all = data::generate_dataset(a.seed, a.n, a.size, a.size, a.ambiguity);
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(a.n) * a.test_fraction));
  std::vector<data::ExportedSample> out;
  for (std::size_t i = a.n - n_test; i < a.n; ++i) out.push_back({all[i], data::Split::Test});
  all.resize(a.n - n_test);
  auto split = data::split(std::move(all), a.labeled_ratio, a.seed);
  for (auto& s : split.labeled) out.push_back({std::move(s), data::Split::Labeled});
  for (auto& s : split.unlabeled) out.push_back({std::move(s), data::Split::Unlabeled});
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.sample.id < y.sample.id; });
  data::export_dataset(a.out, out, 2);
  write_meta(a.out, {{"command", "gen-data"}, {"seed", a.seed}});
  std::cerr << "wrote " << out.size() << " samples to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualfete: dual-teacher feedback for semi-supervised segmentation"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  train_cmd->add_option("--config", ta.config, "config JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ta.out, "run directory")->required();
  train_cmd->add_option("--seed", ta.seed, "overrides the config seed");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint; metrics JSON on stdout");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "DFTE checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ea.data, "dataset directory or synthetic:<seed>")->required();
  eval_cmd->add_option("--perturb", ea.perturb, "stochastic passes")->check(CLI::IsMember({"strong", "dropout"}));
  eval_cmd->add_option("--k", ea.k, "passes per sample")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--n", ea.n_test, "synthetic sample count")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--size", ea.size, "synthetic image side")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--ambiguity", ea.ambiguity, "synthetic ambiguity")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--dropout-rate", ea.dropout_rate, "bottleneck dropout for --perturb dropout")
      ->check(CLI::Range(0.0, 0.99));
  eval_cmd->add_option("--seed", ea.seed, "perturbation seed");

  SuiteArgs sa;
  auto* suite_cmd = app.add_subcommand("suite", "run an ablation grid; writes summary.csv");
  suite_cmd->add_option("--name", sa.name)->required()->check(CLI::IsMember(suites::suite_names()));
  suite_cmd->add_option("--out", sa.out)->required();
  suite_cmd->add_option("--seeds", sa.seeds, "training seeds")->delimiter(',');
  suite_cmd->add_option("--steps", sa.steps, "override training length");
  suite_cmd->add_flag("--quiet", sa.quiet);

  app.add_subcommand("selftest", "run every oracle check");

  GenArgs ga;
  auto* gen_cmd = app.add_subcommand("gen-data", "export a synthetic dataset");
  gen_cmd->add_option("--seed", ga.seed)->required();
  gen_cmd->add_option("--n", ga.n)->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--ambiguity", ga.ambiguity)->required()->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--out", ga.out)->required();
  gen_cmd->add_option("--size", ga.size, "image side")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--labeled-ratio", ga.labeled_ratio)->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--test-fraction", ga.test_fraction)->check(CLI::Range(0.0, 0.9));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*suite_cmd) return cmd_suite(sa);
    if (*gen_cmd) return cmd_gen_data(ga);
    return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kExitNonFinite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
