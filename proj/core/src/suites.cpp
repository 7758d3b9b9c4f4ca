#include "dualfete/suites.hpp"

#include <unistd.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "dualfete/csv_log.hpp"
#include "dualfete/evaluation.hpp"
#include "dualfete/trainer.hpp"

namespace dualfete::suites {
namespace {

namespace fs = std::filesystem;
using train::Corpus;
using train::Mode;
using train::TrainerState;

std::string fmt(double v) { return train::format_double(v); }

double final_value(const RunResult& r, const std::string& key) {
  if (const auto it = r.extra.find(key); it != r.extra.end()) return it->second;
  if (r.history.empty()) throw std::runtime_error("run " + r.variant + " has no history");
  return r.history.back().values.at(key);
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Variant {
  std::string name;
  TrainConfig config;
};

class Runner {
 public:
  Runner(std::string suite, fs::path out, const SuiteOptions& options) : out_(std::move(out)), options_(options) {
    result_.name = std::move(suite);
  }

  const Corpus& corpus(const TrainConfig& c) {
    if (!corpus_ || !(cached_data_ == c.data) || !(cached_net_ == c.net)) {
      corpus_ = train::make_corpus(c);
      cached_data_ = c.data;
      cached_net_ = c.net;
    }
    return *corpus_;
  }

  fs::path run_dir(const std::string& variant, std::uint64_t seed) const {
    return out_ / variant / ("seed" + std::to_string(seed));
  }

  TrainConfig with_seed(TrainConfig c, std::uint64_t seed) const {
    c.seed = seed;
    if (options_.steps) c.steps = *options_.steps;
    return c;
  }

  RunResult& finish(const std::string& variant, std::uint64_t seed, const TrainConfig& c, const TrainerState& state) {
    if (options_.write_runs) train::write_run(run_dir(variant, seed), state, c, corpus(c));
    RunResult r;
    r.variant = variant;
    r.seed = seed;
    r.config = c;
    r.history = state.history;
    result_.runs.push_back(std::move(r));
    RunResult& back = result_.runs.back();
    if (!options_.quiet && !back.history.empty())
      std::cerr << "[" << result_.name << "] " << variant << " seed " << seed
                << ": dice=" << fmt(reported_dice(back)) << " pl_error=" << fmt(final_value(back, "pl_error_train"))
                << " disag=" << fmt(final_value(back, "disag_train")) << "\n";
    return back;
  }

  RunResult& run(const std::string& variant, std::uint64_t seed, const TrainConfig& base) {
    const TrainConfig c = with_seed(base, seed);
    return finish(variant, seed, c, train::train(c, corpus(c)));
  }

  SuiteResult& result() { return result_; }
  const SuiteOptions& options() const { return options_; }

 private:
  fs::path out_;
  SuiteOptions options_;
  SuiteResult result_;
  std::optional<Corpus> corpus_;
  train::DataConfig cached_data_;
  segnet::NetConfig cached_net_;
};

void standard_table(SuiteResult& r, const std::vector<std::string>& variants, const std::vector<std::string>& keys) {
  r.header = {"variant", "seed", "dice_reported"};
  r.header.insert(r.header.end(), keys.begin(), keys.end());
  for (const auto& v : variants) {
    std::vector<double> sums(keys.size() + 1, 0.0);
    const auto runs = r.of(v);
    for (const RunResult* run : runs) {
      std::vector<std::string> row{v, std::to_string(run->seed), fmt(reported_dice(*run))};
      sums[0] += reported_dice(*run);
      for (std::size_t k = 0; k < keys.size(); ++k) {
        const double x = final_value(*run, keys[k]);
        sums[k + 1] += x;
        row.push_back(fmt(x));
      }
      r.rows.push_back(std::move(row));
    }
    if (runs.size() > 1) {
      std::vector<std::string> row{v, "mean"};
      for (double s : sums) row.push_back(fmt(s / static_cast<double>(runs.size())));
      r.rows.push_back(std::move(row));
    }
  }
}

const std::vector<std::string> kFinalKeys{"dice_test_student", "dice_test_phi",  "dice_test_psi",
                                          "hd95_test_student", "pl_error_train", "disag_train",
                                          "fg_pixel_frac_pl"};

}  // namespace

double SuiteResult::mean(const std::string& variant, const std::string& key) const {
  const auto runs = of(variant);
  if (runs.empty()) throw std::runtime_error("suite " + name + " has no variant " + variant);
  double s = 0.0;
  for (const RunResult* r : runs) s += key == "dice_reported" ? reported_dice(*r) : final_value(*r, key);
  return s / static_cast<double>(runs.size());
}

std::vector<const RunResult*> SuiteResult::of(const std::string& variant) const {
  std::vector<const RunResult*> out;
  for (const auto& r : runs)
    if (r.variant == variant) out.push_back(&r);
  return out;
}

TrainConfig desk_config() {
  TrainConfig c;
  c.steps = 1500;
  c.eval_interval = 100;
  c.data.seed = 2024;
  c.data.n_train = 200;
  c.data.n_test = 50;
  c.data.ambiguity = 0.6;
  c.data.labeled_ratio = 0.05;
  return c;
}

double reported_dice(const RunResult& run) {
  const auto& v = run.history.back().values;
  if (run.config.mode == Mode::FullySupervised) return 0.5 * (v.at("dice_test_phi") + v.at("dice_test_psi"));
  return v.at("dice_test_student");
}

SuiteResult run_headline(const fs::path& out, const SuiteOptions& options) {
  Runner runner("headline", out, options);
  std::vector<Variant> variants;
  TrainConfig c = desk_config();
  c.mode = Mode::FullySupervised;
  variants.push_back({"fully_supervised", c});
  c.mode = Mode::DualNoFeedback;
  variants.push_back({"dual_no_feedback", c});
  c.mode = Mode::DualFete;
  variants.push_back({"dualfete", c});
  c.pairing = pseudo::Pairing::Mismatched;
  variants.push_back({"dualfete_mismatched", c});
  std::vector<std::string> names;
  for (const auto& v : variants) {
    names.push_back(v.name);
    for (auto seed : options.seeds) runner.run(v.name, seed, v.config);
  }
  standard_table(runner.result(), names, kFinalKeys);
  return std::move(runner.result());
}

SuiteResult run_table2(const fs::path& out, const SuiteOptions& options) {
  Runner runner("table2", out, options);
  TrainConfig base = desk_config();
  base.cross_supervision = false;
  std::vector<Variant> v;
  auto add = [&](std::string name, auto edit) {
    TrainConfig c = base;
    edit(c);
    v.push_back({std::move(name), c});
  };
  using train::FeedbackTerms;
  using train::ForcedSign;
  add("ts_baseline", [](TrainConfig& c) {
    c.mode = Mode::SingleTeacherFeedback;
    c.forced_sign = ForcedSign::Zero;
  });
  add("single_feedback", [](TrainConfig& c) { c.mode = Mode::SingleTeacherFeedback; });
  add("dual_vanilla", [](TrainConfig& c) { c.feedback_terms = FeedbackTerms::Vanilla; });
  add("agree_only", [](TrainConfig& c) { c.feedback_terms = FeedbackTerms::AgreeOnly; });
  add("disagree_only", [](TrainConfig& c) { c.feedback_terms = FeedbackTerms::DisagreeOnly; });
  add("mismatched", [](TrainConfig& c) { c.pairing = pseudo::Pairing::Mismatched; });
  add("dualfete", [](TrainConfig&) {});
  add("single_feedback_strong", [](TrainConfig& c) {
    c.mode = Mode::SingleTeacherFeedback;
    c.strong_aug_likelihood = true;
  });
  add("dualfete_strong", [](TrainConfig& c) { c.strong_aug_likelihood = true; });
  std::vector<std::string> names;
  for (const auto& x : v) {
    names.push_back(x.name);
    for (auto seed : options.seeds) runner.run(x.name, seed, x.config);
  }
  standard_table(runner.result(), names, kFinalKeys);
  return std::move(runner.result());
}

SuiteResult run_fig3(const fs::path& out, const SuiteOptions& options, std::size_t phase1_steps,
                     std::size_t phase2_steps) {
  Runner runner("fig3", out, options);
  using train::ForcedSign;
  TrainConfig p1 = desk_config();
  p1.mode = Mode::DualNoFeedback;
  p1.cross_supervision = true;
  p1.strong_aug_cs = false;
  p1.steps = phase1_steps;

  TrainConfig p2 = p1;
  p2.steps = phase2_steps;
  p2.ramp_steps = 1;
  p2.eval_interval = 25;
  std::vector<Variant> variants;
  auto add = [&](std::string name, Mode mode, ForcedSign sign, bool cs) {
    TrainConfig c = p2;
    c.mode = mode;
    c.forced_sign = sign;
    c.cross_supervision = cs;
    variants.push_back({std::move(name), c});
  };
  add("cs_only", Mode::DualNoFeedback, ForcedSign::None, true);
  add("agree_neg", Mode::DualFete, ForcedSign::AgreeNeg, false);
  add("agree_neg_cs", Mode::DualFete, ForcedSign::AgreeNeg, true);
  add("disagree_neg", Mode::DualFete, ForcedSign::DisagreeNeg, false);
  add("disagree_pos", Mode::DualFete, ForcedSign::DisagreePos, false);
  add("both", Mode::DualFete, ForcedSign::None, true);

  for (auto seed : options.seeds) {
    TrainConfig c1 = p1;
    c1.seed = seed;
    const Corpus& corpus = runner.corpus(c1);
    const TrainerState phase1 = train::train(c1, corpus);
    if (options.write_runs) train::write_run(out / "phase1" / ("seed" + std::to_string(seed)), phase1, c1, corpus);
    for (const auto& v : variants) {
      TrainConfig c2 = v.config;
      c2.seed = seed;
      TrainerState branch = phase1;  // every variant starts from the same state
      branch.history.clear();
      RunResult& r = runner.finish(v.name, seed, c2, train::train(c2, corpus, std::move(branch)));
      r.phase1 = phase1.history.back();
    }
  }

  SuiteResult& res = runner.result();
  res.header = {"variant",          "seed",           "p1_disag",       "p1_pl_error",     "p1_fg_frac",
                "disag_final",      "pl_error_final", "fg_frac_final",  "disag_max",       "pl_error_max",
                "fg_frac_min"};
  for (const auto& r : res.runs) {
    double dmax = 0.0, pmax = 0.0, fmin = 1.0;
    for (const auto& h : r.history) {
      dmax = std::max(dmax, h.values.at("disag_train"));
      pmax = std::max(pmax, h.values.at("pl_error_train"));
      fmin = std::min(fmin, h.values.at("fg_pixel_frac_pl"));
    }
    const auto& p = r.phase1->values;
    res.rows.push_back({r.variant, std::to_string(r.seed), fmt(p.at("disag_train")), fmt(p.at("pl_error_train")),
                        fmt(p.at("fg_pixel_frac_pl")), fmt(final_value(r, "disag_train")),
                        fmt(final_value(r, "pl_error_train")), fmt(final_value(r, "fg_pixel_frac_pl")), fmt(dmax),
                        fmt(pmax), fmt(fmin)});
  }
  return std::move(res);
}

SuiteResult run_fig5(const fs::path& out, const SuiteOptions& options) {
  Runner runner("fig5", out, options);
  std::vector<std::string> names;
  for (const bool strong : {false, true})
    for (const double thr : {0.5, 0.6, 0.7, 0.8, 0.9}) {
      TrainConfig c = desk_config();
      c.confidence_threshold = thr;
      c.strong_aug_likelihood = strong;
      const std::string name = "thr" + fmt(thr) + (strong ? "_strong" : "_weak");
      names.push_back(name);
      for (auto seed : options.seeds) runner.run(name, seed, c);
    }
  standard_table(runner.result(), names, kFinalKeys);
  return std::move(runner.result());
}

SuiteResult run_table3(const fs::path& out, const SuiteOptions& options) {
  Runner runner("table3", out, options);
  constexpr std::size_t kPasses = 6;
  constexpr double kEvalDropout = 0.2;
  TrainConfig ldf = desk_config();
  ldf.cross_supervision = false;
  TrainConfig lcs = desk_config();
  lcs.mode = Mode::DualNoFeedback;
  const std::size_t threads = eval::thread_count_from_env();
  for (const auto& [name, base] : {std::pair{std::string("ldf_only"), ldf}, std::pair{std::string("lcs_only"), lcs}})
    for (auto seed : options.seeds) {
      const TrainConfig c = runner.with_seed(base, seed);
      const Corpus& corpus = runner.corpus(c);
      const TrainerState state = train::train(c, corpus);
      RunResult& r = runner.finish(name, seed, c, state);
      segnet::NetConfig drop_net = c.net;
      drop_net.dropout_rate = kEvalDropout;
      for (const auto& [role, params] : {std::pair{"phi", &state.phi.params}, std::pair{"psi", &state.psi.params}}) {
        auto summarize = [&](const std::vector<eval::PerturbedSample>& ps, const std::string& prefix) {
          double dm = 0, ds = 0, em = 0, es = 0;
          for (const auto& p : ps) dm += p.dice_mean, ds += p.dice_std, em += p.entropy_mean, es += p.entropy_std;
          const double n = static_cast<double>(ps.size());
          r.extra[prefix + "_dice_mean"] = dm / n;
          r.extra[prefix + "_dice_std"] = ds / n;
          r.extra[prefix + "_entropy_mean"] = em / n;
          r.extra[prefix + "_entropy_std"] = es / n;
        };
        summarize(eval::perturbed_eval(*params, c.net, corpus.test, kPasses, eval::Perturbation::StrongAug,
                                       derive_seed(seed, 0xE91), threads),
                  std::string(role) + "_strong");
        summarize(eval::perturbed_eval(*params, drop_net, corpus.test, kPasses, eval::Perturbation::Dropout,
                                       derive_seed(seed, 0xE92), threads),
                  std::string(role) + "_dropout");
      }
    }
  SuiteResult& res = runner.result();
  res.header = {"variant", "seed", "teacher", "strong_dice_mean", "strong_dice_std", "dropout_entropy_mean",
                "dropout_entropy_std"};
  for (const auto& r : res.runs)
    for (const std::string role : {"phi", "psi"})
      res.rows.push_back({r.variant, std::to_string(r.seed), role, fmt(r.extra.at(role + "_strong_dice_mean")),
                          fmt(r.extra.at(role + "_strong_dice_std")), fmt(r.extra.at(role + "_dropout_entropy_mean")),
                          fmt(r.extra.at(role + "_dropout_entropy_std"))});
  return std::move(res);
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"headline", "table2", "fig3", "fig5", "table3"};
  return names;
}

SuiteResult run_suite(const std::string& name, const fs::path& out, const SuiteOptions& options) {
  fs::create_directories(out);
  const std::string started = timestamp();
  SuiteResult r;
  if (name == "headline")
    r = run_headline(out, options);
  else if (name == "table2")
    r = run_table2(out, options);
  else if (name == "fig3")
    r = run_fig3(out, options);
  else if (name == "fig5")
    r = run_fig5(out, options);
  else if (name == "table3")
    r = run_table3(out, options);
  else
    throw std::invalid_argument("unknown suite '" + name + "'");
  train::write_table(out / "summary.csv", r.header, r.rows);

  char host[256] = {};
  gethostname(host, sizeof host - 1);
  nlohmann::json meta{{"suite", name},
                      {"started", started},
                      {"finished", timestamp()},
                      {"host", host},
                      {"eval_threads", eval::thread_count_from_env()}};
  std::ofstream(out / "meta.json") << meta.dump(2) << "\n";
  return r;
}

}  // namespace dualfete::suites
