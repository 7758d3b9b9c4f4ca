#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "dualfete/losses.hpp"
#include "dualfete/pseudo.hpp"
#include "dualfete/segnet.hpp"

namespace dualfete::train {

enum class Mode { FullySupervised, SingleTeacherFeedback, DualNoFeedback, DualFete };

// Overrides applied to the probed deltas. Non-zero overrides use
// sign * max(|delta|, forced_delta_floor); the other delta becomes 0.
enum class ForcedSign { None, Zero, AgreeNeg, DisagreeNeg, DisagreePos, BothNeg };

// Which dual-teacher feedback terms are active. Vanilla probes with the fused
// labels on every pixel and applies one delta to both teachers' full maps.
enum class FeedbackTerms { Both, AgreeOnly, DisagreeOnly, Vanilla };

struct OptimConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double max_grad_norm = 1.0;  // global L2 clip before the update; 0 = off
  bool operator==(const OptimConfig&) const = default;
};

// Synthetic data, or an exported dataset directory when `dir` is set.
struct DataConfig {
  std::uint64_t seed = 7;
  std::size_t n_train = 200;
  std::size_t n_test = 50;
  double ambiguity = 0.6;
  double labeled_ratio = 0.05;
  std::string dir;
  bool operator==(const DataConfig&) const = default;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  // Initialization seeds; derived from `seed` when absent.
  std::optional<std::uint64_t> phi_seed;
  std::optional<std::uint64_t> psi_seed;
  std::optional<std::uint64_t> student_seed;

  std::size_t steps = 1500;
  std::size_t eval_interval = 50;
  std::size_t eval_train_samples = 32;  // unlabeled samples scored for pl_error / disagreement
  std::size_t batch_labeled = 4;
  std::size_t batch_unlabeled = 8;
  OptimConfig student;
  OptimConfig teacher;
  double poly_power = 0.9;

  // Fixed probe step; tracks the decayed student lr when absent.
  std::optional<double> probe_eta;
  bool normalize_probe = true;
  double lambda_max = 1.0;
  std::optional<std::size_t> ramp_steps;  // 30% of `steps` when absent
  double confidence_threshold = 0.7;

  Mode mode = Mode::DualFete;
  pseudo::Pairing pairing = pseudo::Pairing::Matched;
  ForcedSign forced_sign = ForcedSign::None;
  double forced_delta_floor = 1.0;
  FeedbackTerms feedback_terms = FeedbackTerms::Both;
  bool cross_supervision = true;
  bool strong_aug_cs = true;  // weak-to-strong views for the cross-supervised loss
  bool strong_aug_likelihood = false;
  loss::Reduction likelihood_reduction = loss::Reduction::Mean;
  double feedback_weight = 1.0;

  std::size_t finetune_steps = 0;
  double finetune_lr = 0.01;

  segnet::NetConfig net;
  DataConfig data;

  std::size_t effective_ramp_steps() const;
  // Throws ConfigError naming the first invalid field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// JSON mirror of TrainConfig. Missing keys keep their defaults; unknown keys
// and type mismatches raise ConfigError with the dotted field path.
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const TrainConfig& config);

std::string to_string(Mode m);
std::string to_string(ForcedSign s);
std::string to_string(FeedbackTerms t);

}  // namespace dualfete::train
