#pragma once

#include <cstdint>
#include <map>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualfete/config.hpp"
#include "dualfete/metrics.hpp"

namespace dualfete::suites {

using train::TrainConfig;

struct SuiteOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::optional<std::size_t> steps;  // overrides the suite's training length
  bool write_runs = true;            // per-run logs and checkpoints under out/
  bool quiet = false;                // progress lines on stderr unless set
};

struct RunResult {
  std::string variant;
  std::uint64_t seed = 0;
  TrainConfig config;
  std::vector<metrics::MetricsRecord> history;
  std::optional<metrics::MetricsRecord> phase1;  // fig3: state the variant branched from
  std::map<std::string, double> extra;           // suite-specific scalars
};

struct SuiteResult {
  std::string name;
  std::vector<RunResult> runs;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Mean of `key` in the final record (or `extra`) over runs of a variant.
  double mean(const std::string& variant, const std::string& key) const;
  std::vector<const RunResult*> of(const std::string& variant) const;
};

// Base configuration of the desk-scale benchmark: 16x16 images, 200 train /
// 50 test samples at ambiguity 0.6 with 5% labels.
TrainConfig desk_config();

// Value a run reports for comparisons: student test Dice, or the mean of the
// two teachers in fully supervised mode where the student is never trained.
double reported_dice(const RunResult& run);

SuiteResult run_headline(const std::filesystem::path& out, const SuiteOptions& options = {});
SuiteResult run_table2(const std::filesystem::path& out, const SuiteOptions& options = {});
SuiteResult run_fig3(const std::filesystem::path& out, const SuiteOptions& options = {}, std::size_t phase1_steps = 1500,
                     std::size_t phase2_steps = 300);
SuiteResult run_fig5(const std::filesystem::path& out, const SuiteOptions& options = {});
SuiteResult run_table3(const std::filesystem::path& out, const SuiteOptions& options = {});

const std::vector<std::string>& suite_names();
// Dispatches by name and writes summary.csv and meta.json under `out`.
SuiteResult run_suite(const std::string& name, const std::filesystem::path& out, const SuiteOptions& options = {});

}  // namespace dualfete::suites
