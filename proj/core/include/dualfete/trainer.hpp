#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dualfete/augment.hpp"
#include "dualfete/config.hpp"
#include "dualfete/feedback.hpp"
#include "dualfete/metrics.hpp"
#include "dualfete/synthdata.hpp"

namespace dualfete::train {

using autograd::GradientVector;
using autograd::ModelParams;
using autograd::Tensor;
using data::SegSample;

// lambda_max * exp(-5 (1 - min(step / ramp_steps, 1))^2)
double ramp_up(std::size_t step, std::size_t ramp_steps, double lambda_max);
// base * (1 - step / total)^power
double poly_lr(double base, std::size_t step, std::size_t total, double power);

struct Corpus {
  data::Dataset train;
  std::vector<SegSample> test;
};

// Synthetic corpus (first n_train samples split, the remaining n_test held
// out) or an exported dataset directory when config.data.dir is set.
Corpus make_corpus(const TrainConfig& config);

struct ModelState {
  ModelParams params;
  GradientVector velocity;
};

struct TrainerState {
  ModelState phi;
  ModelState psi;
  ModelState student;
  std::size_t step = 0;
  std::vector<metrics::MetricsRecord> history;
};

TrainerState init_state(const TrainConfig& config);

// Round-robin mini-batches over a freshly shuffled order every epoch. The
// batch for a given step is a pure function of (seed, stream, step).
class BatchSampler {
 public:
  BatchSampler(std::size_t population, std::size_t batch, std::uint64_t seed, std::uint64_t stream);
  std::vector<std::size_t> indices(std::size_t step);

 private:
  std::size_t population_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order_;
};

// One strong view per weak view; sample i pastes from sample (i + 1) mod B.
struct StrongBatch {
  Tensor images;  // (B, 1, H, W)
  std::vector<data::AugmentationSpec> specs;
};
StrongBatch make_strong_batch(std::span<const SegSample> weak, Rng& rng);

// Positional part of each sample's strong spec applied to a per-pixel grid,
// with the paste donor's grid transplanted inside the rectangle.
template <class T>
pseudo::Grid<T> to_strong_view(const pseudo::Grid<T>& weak, std::span<const data::AugmentationSpec> specs);

// seg_loss of theta's strong-view predictions against the counterpart's
// weak-view labels carried into the strong view, restricted to pixels where
// the counterpart's confidence is >= threshold. Identity specs (or an empty
// span) use the grids as they are.
Tensor cross_sup_loss(const Tensor& theta_probs, const pseudo::LabelMap& other_labels_weak,
                      const pseudo::ConfidenceMap& other_conf_weak, std::span<const data::AugmentationSpec> specs,
                      double threshold);

struct StepReport {
  double loss_l_phi = 0.0;
  double loss_l_psi = 0.0;
  double loss_df_phi = 0.0;
  double loss_df_psi = 0.0;
  double loss_cs_phi = 0.0;
  double loss_cs_psi = 0.0;
  double loss_student = 0.0;
  double lambda = 0.0;
  double student_lr = 0.0;
  feedback::FeedbackSignal raw;      // probed deltas
  feedback::FeedbackSignal applied;  // after mode / forced-sign overrides
  std::size_t disagree_pixels = 0;
};

// One iteration of the dual-teacher loop. `schedule_step` drives the lr decay
// and ramp-up; the state's step counter advances by one. Throws NonFiniteLoss
// naming the first non-finite term.
StepReport train_step(TrainerState& state, const TrainConfig& config, std::span<const SegSample> labeled,
                      std::span<const SegSample> unlabeled, std::size_t schedule_step);

// Runs config.steps iterations from `state` (a fresh init_state when absent),
// recording a MetricsRecord every eval_interval steps and after the last one.
TrainerState train(const TrainConfig& config, const Corpus& corpus, std::optional<TrainerState> state = std::nullopt);

// Plain supervised SGD on seg_loss over the labeled set.
ModelParams finetune_student(const ModelParams& student, const TrainConfig& config,
                             std::span<const SegSample> labeled, std::size_t steps, double lr);

metrics::MetricsRecord evaluate_state(const TrainerState& state, const TrainConfig& config, const Corpus& corpus,
                                      const StepReport& last);

// log.csv, config.echo.json, one DFTE checkpoint per role and, for dual
// modes, feedback_map.csv holding per-pixel labeled loss changes of the
// agreement and disagreement probes.
void write_run(const std::filesystem::path& dir, const TrainerState& state, const TrainConfig& config,
               const Corpus& corpus);

}  // namespace dualfete::train
