#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualfete/metrics.hpp"

namespace dualfete::train {

// Trainer log schema, one row per evaluation. hd95 columns hold
// metrics::kHd95Missing when the distance is undefined.
inline constexpr std::array<std::string_view, 18> kLogColumns{
    "step",          "loss_l_phi",        "loss_l_psi",       "loss_df_phi",       "loss_df_psi",
    "loss_cs_phi",   "loss_cs_psi",       "loss_student",     "delta_a",           "delta_d",
    "lambda",        "pl_error_train",    "disag_train",      "dice_test_student", "dice_test_phi",
    "dice_test_psi", "hd95_test_student", "fg_pixel_frac_pl",
};

// Shortest round-trip representation, so logs compare bitwise across runs.
std::string format_double(double v);

// Header plus one line per record; values missing from a record are written as empty cells.
std::string render_csv(std::span<const metrics::MetricsRecord> history);
void write_csv(const std::filesystem::path& path, std::span<const metrics::MetricsRecord> history);

// Generic table writer used by suite summaries.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

}  // namespace dualfete::train
