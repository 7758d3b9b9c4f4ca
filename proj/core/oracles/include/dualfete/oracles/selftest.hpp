#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace dualfete::oracles {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Each check runs its oracle family at the sizes used by the acceptance suite.
CheckResult check_autograd(std::size_t nets = 20);                 // max rel. error < 1e-4
CheckResult check_first_order_delta(std::size_t instances = 10);   // residual order >= 1.8
CheckResult check_bilevel(std::size_t seeds = 20);                 // sign agreement > 80%
CheckResult check_fusion_laws(std::size_t instances = 1000);       // zero violations
CheckResult check_metric_oracles(std::size_t pairs = 200);         // exact equality

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kMinTaylorOrder = 1.8;
inline constexpr double kMinSignAgreement = 0.8;

// Runs every check in order; `log` receives one line per check.
std::vector<CheckResult> run_selftest(std::ostream* log = nullptr);

}  // namespace dualfete::oracles
