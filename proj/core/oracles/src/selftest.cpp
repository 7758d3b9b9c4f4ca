#include "dualfete/oracles/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>

#include "dualfete/metrics.hpp"
#include "dualfete/oracles/bilevel_oracle.hpp"
#include "dualfete/oracles/exhaustive_metrics.hpp"
#include "dualfete/oracles/fusion_check.hpp"
#include "dualfete/oracles/gradient_check.hpp"
#include "dualfete/oracles/taylor_check.hpp"

namespace dualfete::oracles {

namespace {

constexpr std::uint64_t kSelftestSeed = 20240917;

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

template <class Fn>
CheckResult timed(std::string name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = fn();
  r.name = std::move(name);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

CheckResult check_autograd(std::size_t nets) {
  return timed("autograd finite differences", [&] {
    double worst = 0.0;
    std::string where;
    std::size_t coords = 0;
    for (std::size_t i = 0; i < nets; ++i) {
      auto c = random_case(kSelftestSeed + i);
      const auto rep = check_gradient(c.params, c.objective);
      coords += rep.coordinates;
      if (rep.max_rel_error >= worst) {
        worst = rep.max_rel_error;
        where = c.description + ", " + rep.worst_param + "[" + std::to_string(rep.worst_index) + "]";
      }
    }
    return CheckResult{"", worst < kGradTolerance,
                       fmt("%zu nets, %zu coordinates, max rel. error %.3e at %s", nets, coords, worst, where.c_str())};
  });
}

CheckResult check_first_order_delta(std::size_t instances) {
  return timed("first-order delta identity", [&] {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < instances; ++i) worst = std::min(worst, taylor_instance(kSelftestSeed + i).min_order());
    return CheckResult{"", worst >= kMinTaylorOrder, fmt("%zu instances, min residual order %.3f", instances, worst)};
  });
}

CheckResult check_bilevel(std::size_t seeds) {
  return timed("bilevel oracle sign agreement", [&] {
    std::size_t agree = 0, counted = 0;
    double worst = 1.0;
    for (std::size_t i = 0; i < seeds; ++i) {
      const auto cmp = compare_bilevel(bilevel_instance(kSelftestSeed + i));
      agree += cmp.agree;
      counted += cmp.above_noise;
      worst = std::min(worst, cmp.agreement());
    }
    const double rate = counted == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(counted);
    return CheckResult{"", rate > kMinSignAgreement,
                       fmt("%zu seeds, %zu/%zu above-noise coordinates agree (%.1f%%), worst seed %.1f%%", seeds, agree,
                           counted, 100.0 * rate, 100.0 * worst)};
  });
}

CheckResult check_fusion_laws(std::size_t instances) {
  return timed("fusion and receiver laws", [&] {
    const auto rep = check_fusion(kSelftestSeed, instances);
    std::string detail = fmt("%zu instances, %zu pixels, %zu violations", rep.instances, rep.pixels,
                             rep.total_violations());
    for (const auto& [law, n] : rep.violations)
      if (n > 0) detail += fmt(" [%s: %zu]", law.c_str(), n);
    return CheckResult{"", rep.total_violations() == 0, detail};
  });
}

CheckResult check_metric_oracles(std::size_t pairs) {
  return timed("metric oracles", [&] {
    const auto sweep = sweep_metrics(kSelftestSeed, pairs);
    using M = std::vector<std::uint8_t>;
    struct Case {
      M a, b;
      double want;
    };
    const std::vector<Case> cases{
        {{0, 0, 0, 0}, {0, 0, 0, 0}, 1.0},
        {{1, 1, 0, 0}, {0, 0, 1, 1}, 0.0},
        {{1, 0, 1, 0}, {1, 0, 1, 0}, 1.0},
        {{1, 1, 0, 0}, {0, 1, 1, 0}, 0.5},
        {{1, 1, 1, 0}, {1, 0, 0, 0}, 0.5},
        {{1, 0, 0, 0}, {0, 0, 0, 0}, 0.0},
    };
    std::size_t bad_cases = 0;
    for (const auto& c : cases) bad_cases += metrics::dice(c.a, c.b) != c.want;
    const bool ok = sweep.hd95_mismatches == 0 && sweep.dice_mismatches == 0 && bad_cases == 0;
    return CheckResult{"", ok,
                       fmt("%zu mask pairs: %zu hd95 / %zu dice mismatches; %zu/%zu closed-form dice cases wrong",
                           sweep.pairs, sweep.hd95_mismatches, sweep.dice_mismatches, bad_cases, cases.size())};
  });
}

std::vector<CheckResult> run_selftest(std::ostream* log) {
  std::vector<CheckResult> out;
  for (auto* check : {+[] { return check_autograd(); }, +[] { return check_first_order_delta(); },
                      +[] { return check_bilevel(); }, +[] { return check_fusion_laws(); },
                      +[] { return check_metric_oracles(); }}) {
    out.push_back(check());
    const auto& r = out.back();
    if (log) *log << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << fmt(" (%.1fs)", r.seconds) << '\n';
  }
  return out;
}

}  // namespace dualfete::oracles
