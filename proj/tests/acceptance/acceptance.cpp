// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   dualfete_acceptance --cli <path to dualfete> --work <scratch dir> [--only A1,A6,...]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dualfete/config.hpp"
#include "dualfete/oracles/selftest.hpp"
#include "dualfete/suites.hpp"

namespace fs = std::filesystem;
using namespace dualfete;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// budget_s == 0: the criterion sets no time limit.
Outcome from_check(const oracles::CheckResult& r, double budget_s = 0) {
  if (budget_s == 0) return {r.passed, r.detail + fmt("; %.1fs", r.seconds)};
  return {r.passed && r.seconds < budget_s, r.detail + fmt("; %.1fs (budget %.0fs)", r.seconds, budget_s)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// The headline suite is shared by A6 and A8.
struct Headline {
  suites::SuiteResult result;
  double seconds = 0.0;
};

double mean_dice(const suites::SuiteResult& r, const std::string& variant) {
  double s = 0.0;
  const auto runs = r.of(variant);
  for (const auto* run : runs) s += suites::reported_dice(*run);
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

Outcome a6(const Headline& h) {
  constexpr double kBudget = 30 * 60;
  const double fete = mean_dice(h.result, "dualfete");
  const double nofb = mean_dice(h.result, "dual_no_feedback");
  const double sup = mean_dice(h.result, "fully_supervised");
  const double gap = 100.0 * (fete - nofb);
  const bool ok = fete > nofb && nofb > sup && gap >= 1.0 && h.seconds < kBudget;
  return {ok, fmt("student dice: dualfete %.4f, dual_no_feedback %.4f, fully_supervised %.4f; gap %+.2f points "
                  "(need >= +1.00); %.0fs (budget %.0fs)",
                  fete, nofb, sup, gap, h.seconds, kBudget)};
}

Outcome a8(const Headline& h) {
  const double matched = mean_dice(h.result, "dualfete");
  const double mismatched = mean_dice(h.result, "dualfete_mismatched");
  const double gap = 100.0 * (matched - mismatched);
  return {gap >= 0.5, fmt("matched %.4f, mismatched %.4f; mismatched trails by %+.2f points (need >= +0.50)", matched,
                          mismatched, gap)};
}

Outcome a7(const suites::SuiteResult& r) {
  auto last = [](const suites::RunResult& run, const char* key) { return run.history.back().values.at(key); };
  auto p1 = [](const suites::RunResult& run, const char* key) { return run.phase1->values.at(key); };

  // (i) teachers pushed apart without cross-supervision
  double disag = 0.0;
  for (const auto* run : r.of("agree_neg")) disag += last(*run, "disag_train");
  disag /= static_cast<double>(r.of("agree_neg").size());
  const bool i_ok = disag > 0.5;

  // (ii) background collapse in at least two of three seeds
  std::size_t collapsed = 0;
  for (const auto* run : r.of("disagree_neg"))
    collapsed += last(*run, "fg_pixel_frac_pl") < 0.1 * p1(*run, "fg_pixel_frac_pl");
  const bool ii_ok = collapsed >= 2;

  // (iii) cross-supervision keeps pseudo-labels near phase 1 while (i) does not
  auto ratio = [&](const std::string& v) {
    double s = 0.0;
    for (const auto* run : r.of(v)) s += last(*run, "pl_error_train") / p1(*run, "pl_error_train");
    return s / static_cast<double>(r.of(v).size());
  };
  const double with_cs = ratio("agree_neg_cs"), without = ratio("agree_neg");
  const bool iii_ok = with_cs <= 1.2 && without > 1.2;

  return {i_ok && ii_ok && iii_ok,
          fmt("(i) agree_neg disagreement %.3f (need > 0.5) %s; (ii) disagree_neg collapsed in %zu/%zu seeds %s; "
              "(iii) pl_error / phase 1: agree_neg_cs %.3f (need <= 1.2), agree_neg %.3f (need > 1.2) %s",
              disag, i_ok ? "ok" : "FAIL", collapsed, r.of("disagree_neg").size(), ii_ok ? "ok" : "FAIL", with_cs,
              without, iii_ok ? "ok" : "FAIL")};
}

Outcome a9(const fs::path& cli, const fs::path& work) {
  train::TrainConfig c = suites::desk_config();
  c.steps = 200;
  c.eval_interval = 50;
  const fs::path cfg = work / "a9_config.json";
  std::ofstream(cfg) << train::config_to_json(c);
  std::string logs[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = work / ("a9_run" + std::to_string(i));
    fs::remove_all(out);
    const std::string cmd = "\"" + cli.string() + "\" train --config \"" + cfg.string() + "\" --out \"" +
                            out.string() + "\" --seed 7 2>/dev/null";
    if (const int rc = std::system(cmd.c_str()); rc != 0) return {false, fmt("train exited with status %d", rc)};
    logs[i] = slurp(out / "log.csv");
  }
  const bool same = !logs[0].empty() && logs[0] == logs[1];
  return {same, fmt("two train invocations, log.csv %zu bytes, %s", logs[0].size(),
                    same ? "bitwise identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualfete acceptance suite"};
  std::string cli, work = (fs::temp_directory_path() / "dualfete_acceptance").string(), only;
  app.add_option("--cli", cli, "dualfete executable (for A9)")->required();
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "comma-separated subset, e.g. A1,A4");
  CLI11_PARSE(app, argc, argv);

  std::set<std::string> selected;
  for (std::stringstream ss(only); ss.good();) {
    std::string id;
    std::getline(ss, id, ',');
    if (!id.empty()) selected.insert(id);
  }
  auto wanted = [&](const std::string& id) { return selected.empty() || selected.contains(id); };
  fs::create_directories(work);

  std::optional<Headline> headline;
  auto get_headline = [&]() -> const Headline& {
    if (!headline) {
      const auto t0 = std::chrono::steady_clock::now();
      headline = Headline{suites::run_suite("headline", fs::path(work) / "headline"), 0.0};
      headline->seconds = seconds_since(t0);
    }
    return *headline;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1 autograd finite differences", [] { return from_check(oracles::check_autograd(), 60); }},
      {"A2 first-order delta identity", [] { return from_check(oracles::check_first_order_delta()); }},
      {"A3 bilevel oracle sign agreement", [] { return from_check(oracles::check_bilevel(), 300); }},
      {"A4 fusion and mask laws", [] { return from_check(oracles::check_fusion_laws()); }},
      {"A5 metric oracles", [] { return from_check(oracles::check_metric_oracles()); }},
      {"A6 headline trend", [&] { return a6(get_headline()); }},
      {"A7 forced-sign degenerations",
       [&] { return a7(suites::run_suite("fig3", fs::path(work) / "fig3")); }},
      {"A8 mismatched pairing degrades", [&] { return a8(get_headline()); }},
      {"A9 repeat-run determinism", [&] { return a9(cli, work); }},
  };

  bool all = true;
  for (const auto& [name, run] : criteria) {
    const std::string id = name.substr(0, name.find(' '));
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.passed;
    std::cout << (o.passed ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
