#include "dualfete/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dualfete/autograd.hpp"
#include "dualfete/csv_log.hpp"
#include "dualfete/dataset_io.hpp"
#include "dualfete/error.hpp"
#include "dualfete/evaluation.hpp"
#include "dualfete/ops.hpp"

namespace dualfete::train {
namespace {

namespace ag = autograd;
using feedback::FeedbackSignal;
using feedback::LabeledBatch;
using pseudo::ConfidenceMap;
using pseudo::LabelMap;
using pseudo::PixelMask;

constexpr std::uint64_t kAugStream = 0xA065;
constexpr std::uint64_t kLabeledStream = 0x1AB;
constexpr std::uint64_t kUnlabeledStream = 0x0B1;
constexpr std::uint64_t kFinetuneStream = 0xF1E;

LabelMap labels_of(std::span<const SegSample> samples) {
  LabelMap out(samples.size(), samples[0].height, samples[0].width);
  for (std::size_t b = 0; b < samples.size(); ++b)
    std::copy(samples[b].label.begin(), samples[b].label.end(), out.values.begin() + b * out.plane());
  return out;
}

double checked(const Tensor& t, const char* term) {
  const double v = t.item();
  if (!std::isfinite(v)) throw NonFiniteLoss(term);
  return v;
}

bool is_dual(Mode m) { return m == Mode::DualFete || m == Mode::DualNoFeedback; }

void apply_overrides(FeedbackSignal& s, const TrainConfig& c) {
  const ForcedSign fs = c.mode == Mode::DualNoFeedback ? ForcedSign::Zero : c.forced_sign;
  auto force = [&](double d, double sign) { return sign * std::max(std::abs(d), c.forced_delta_floor); };
  double& a = s.delta_agree;
  double& d = s.delta_disagree;
  switch (fs) {
    case ForcedSign::None: break;
    case ForcedSign::Zero: a = d = 0.0; break;
    case ForcedSign::AgreeNeg: a = force(a, -1.0), d = 0.0; break;
    case ForcedSign::DisagreeNeg: a = 0.0, d = force(d, -1.0); break;
    case ForcedSign::DisagreePos: a = 0.0, d = force(d, 1.0); break;
    case ForcedSign::BothNeg: a = force(a, -1.0), d = force(d, -1.0); break;
  }
  if (c.feedback_terms == FeedbackTerms::AgreeOnly) d = 0.0;
  if (c.feedback_terms == FeedbackTerms::DisagreeOnly) a = 0.0;
}

// Forward passes of one teacher, all recorded on its own tape.
struct TeacherPass {
  ModelParams tracked;
  Tensor loss_l;
  Tensor weak_probs;
  Tensor strong_probs;
};

TeacherPass open_teacher(ag::Tape& tape, const ModelParams& params, const segnet::NetConfig& net,
                         const LabeledBatch& lbatch, const Tensor& weak_images, const Tensor* strong_images) {
  TeacherPass p;
  p.tracked = tape.watch(params);
  p.loss_l = loss::seg_loss(segnet::forward(p.tracked, net, lbatch.images), lbatch.labels);
  p.weak_probs = segnet::forward(p.tracked, net, weak_images);
  if (strong_images != nullptr) p.strong_probs = segnet::forward(p.tracked, net, *strong_images);
  return p;
}

void sgd(ModelState& m, const GradientVector& g, double lr, const OptimConfig& o) {
  const double norm = o.max_grad_norm > 0.0 ? ag::grad_norm(g) : 0.0;
  auto r = norm > o.max_grad_norm ? ag::sgd_step(m.params, ag::scale_grads(g, o.max_grad_norm / norm), m.velocity, lr,
                                                 o.momentum, o.weight_decay)
                                  : ag::sgd_step(m.params, g, m.velocity, lr, o.momentum, o.weight_decay);
  m.params = std::move(r.params);
  m.velocity = std::move(r.velocity);
}

std::uint64_t init_seed(const std::optional<std::uint64_t>& explicit_seed, std::uint64_t master, std::uint64_t role) {
  return explicit_seed ? *explicit_seed : derive_seed(master, role);
}

}  // namespace

double ramp_up(std::size_t step, std::size_t ramp_steps, double lambda_max) {
  const double t = std::min(static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(ramp_steps, 1)), 1.0);
  return lambda_max * std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

double poly_lr(double base, std::size_t step, std::size_t total, double power) {
  const double frac = std::min(static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(total, 1)), 1.0);
  return base * std::pow(1.0 - frac, power);
}

Corpus make_corpus(const TrainConfig& config) {
  Corpus c;
  if (!config.data.dir.empty()) {
    for (auto& e : data::import_dataset(config.data.dir)) {
      DUALFETE_REQUIRE(e.sample.height == config.net.height && e.sample.width == config.net.width,
                       "dataset image size does not match net size");
      switch (e.split) {
        case data::Split::Labeled: c.train.labeled.push_back(std::move(e.sample)); break;
        case data::Split::Unlabeled: c.train.unlabeled.push_back(std::move(e.sample)); break;
        case data::Split::Test: c.test.push_back(std::move(e.sample)); break;
      }
    }
    DUALFETE_REQUIRE(!c.train.labeled.empty() && !c.train.unlabeled.empty(),
                     "dataset needs labeled and unlabeled samples");
    return c;
  }
  auto all = data::generate_dataset(config.data.seed, config.data.n_train + config.data.n_test, config.net.height,
                                    config.net.width, config.data.ambiguity);
  c.test.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(config.data.n_train)),
                std::make_move_iterator(all.end()));
  all.resize(config.data.n_train);
  c.train = data::split(std::move(all), config.data.labeled_ratio, config.data.seed);
  return c;
}

TrainerState init_state(const TrainConfig& config) {
  TrainerState s;
  auto make = [&](std::uint64_t seed) {
    ModelState m;
    m.params = segnet::build(config.net, seed);
    m.velocity = ag::zeros_like(m.params);
    return m;
  };
  s.phi = make(init_seed(config.phi_seed, config.seed, 1));
  s.psi = make(init_seed(config.psi_seed, config.seed, 2));
  s.student = make(init_seed(config.student_seed, config.seed, 3));
  return s;
}

BatchSampler::BatchSampler(std::size_t population, std::size_t batch, std::uint64_t seed, std::uint64_t stream)
    : population_(population), batch_(batch), seed_(seed), stream_(stream) {
  DUALFETE_REQUIRE(population > 0 && batch > 0, "BatchSampler: empty population or batch");
}

std::vector<std::size_t> BatchSampler::indices(std::size_t step) {
  std::vector<std::size_t> out(batch_);
  for (std::size_t j = 0; j < batch_; ++j) {
    const std::size_t k = step * batch_ + j;
    const std::size_t epoch = k / population_;
    if (epoch != cached_epoch_) {
      order_.resize(population_);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      Rng rng = make_rng(derive_seed(seed_, stream_), epoch);
      for (std::size_t i = population_; i > 1; --i)
        std::swap(order_[i - 1], order_[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)))]);
      cached_epoch_ = epoch;
    }
    out[j] = order_[k % population_];
  }
  return out;
}

StrongBatch make_strong_batch(std::span<const SegSample> weak, Rng& rng) {
  StrongBatch out;
  std::vector<SegSample> views(weak.size());
  for (std::size_t i = 0; i < weak.size(); ++i) {
    auto v = data::strong_augment(weak[i], weak[(i + 1) % weak.size()], rng);
    views[i] = weak[i];
    views[i].image = std::move(v.image);
    out.specs.push_back(std::move(v.spec));
  }
  out.images = data::stack_images(views);
  return out;
}

template <class T>
pseudo::Grid<T> to_strong_view(const pseudo::Grid<T>& weak, std::span<const data::AugmentationSpec> specs) {
  DUALFETE_REQUIRE(specs.size() == weak.batch, "to_strong_view: one spec per batch element required");
  pseudo::Grid<T> out(weak.batch, weak.height, weak.width);
  const std::size_t plane = weak.plane();
  for (std::size_t b = 0; b < weak.batch; ++b) {
    const std::span<const T> own(weak.values.data() + b * plane, plane);
    const std::span<const T> donor(weak.values.data() + ((b + 1) % weak.batch) * plane, plane);
    const auto moved = data::apply_positional_to_label<T>(specs[b], own, donor, weak.height, weak.width);
    std::copy(moved.begin(), moved.end(), out.values.begin() + b * plane);
  }
  return out;
}

template pseudo::Grid<std::uint8_t> to_strong_view(const pseudo::Grid<std::uint8_t>&,
                                                   std::span<const data::AugmentationSpec>);
template pseudo::Grid<double> to_strong_view(const pseudo::Grid<double>&, std::span<const data::AugmentationSpec>);

Tensor cross_sup_loss(const Tensor& theta_probs, const LabelMap& other_labels_weak, const ConfidenceMap& other_conf_weak,
                      std::span<const data::AugmentationSpec> specs, double threshold) {
  const LabelMap labels = specs.empty() ? other_labels_weak : to_strong_view(other_labels_weak, specs);
  const ConfidenceMap conf = specs.empty() ? other_conf_weak : to_strong_view(other_conf_weak, specs);
  PixelMask mask(conf.batch, conf.height, conf.width);
  for (std::size_t i = 0; i < conf.size(); ++i) mask[i] = conf[i] >= threshold;
  return loss::seg_loss(theta_probs, labels, &mask);
}

StepReport train_step(TrainerState& state, const TrainConfig& cfg, std::span<const SegSample> labeled,
                      std::span<const SegSample> unlabeled, std::size_t t) {
  DUALFETE_REQUIRE(!labeled.empty() && !unlabeled.empty(), "train_step: empty batch");
  const auto& net = cfg.net;
  StepReport rep;
  const double lr_s = poly_lr(cfg.student.lr, t, cfg.steps, cfg.poly_power);
  const double lr_t = poly_lr(cfg.teacher.lr, t, cfg.steps, cfg.poly_power);
  rep.student_lr = lr_s;
  rep.lambda = ramp_up(t, cfg.effective_ramp_steps(), cfg.lambda_max);

  Rng rng = make_rng(derive_seed(cfg.seed, kAugStream), state.step);
  std::vector<SegSample> lab, weak;
  for (const auto& s : labeled) lab.push_back(data::weak_augment(s, rng));
  for (const auto& s : unlabeled) weak.push_back(data::weak_augment(s, rng));
  const LabeledBatch lbatch{data::stack_images(lab), labels_of(lab)};
  const Tensor xw = data::stack_images(weak);

  const bool dual = is_dual(cfg.mode);
  const bool single = cfg.mode == Mode::SingleTeacherFeedback;
  const bool use_cs = dual && cfg.cross_supervision;
  const bool strong_cs = use_cs && cfg.strong_aug_cs;
  const bool strong_ll = (dual || single) && cfg.strong_aug_likelihood;
  StrongBatch strong;
  if (strong_cs || strong_ll) strong = make_strong_batch(weak, rng);
  const Tensor* strong_images = (strong_cs || strong_ll) ? &strong.images : nullptr;

  ag::Tape tape_phi, tape_psi;
  TeacherPass phi = open_teacher(tape_phi, state.phi.params, net, lbatch, xw, strong_images);
  rep.loss_l_phi = checked(phi.loss_l, "loss_l_phi");

  if (cfg.mode == Mode::FullySupervised) {
    TeacherPass psi = open_teacher(tape_psi, state.psi.params, net, lbatch, xw, nullptr);
    rep.loss_l_psi = checked(psi.loss_l, "loss_l_psi");
    sgd(state.phi, tape_phi.backward(phi.loss_l), lr_t, cfg.teacher);
    sgd(state.psi, tape_psi.backward(psi.loss_l), lr_t, cfg.teacher);
    ++state.step;
    return rep;
  }

  std::optional<TeacherPass> psi;
  if (dual) {
    psi = open_teacher(tape_psi, state.psi.params, net, lbatch, xw, strong_images);
    rep.loss_l_psi = checked(psi->loss_l, "loss_l_psi");
  }
  const pseudo::PseudoBundle bundle =
      dual ? pseudo::fuse_dual(phi.weak_probs, psi->weak_probs) : pseudo::single_teacher(phi.weak_probs);
  rep.disagree_pixels = pseudo::count(bundle.disagree_mask);

  // Student: one forward, separate sweeps for the update and each attributor.
  ag::Tape tape_s;
  const ModelParams s_tracked = tape_s.watch(state.student.params);
  const Tensor s_probs = segnet::forward(s_tracked, net, xw);
  const Tensor s_loss = loss::seg_loss(s_probs, bundle.fused);
  rep.loss_student = checked(s_loss, "loss_student");
  const GradientVector g_student = tape_s.backward(s_loss);

  const bool vanilla = single || cfg.feedback_terms == FeedbackTerms::Vanilla;
  const double eta = cfg.probe_eta.value_or(lr_s);
  FeedbackSignal& raw = rep.raw;
  raw.eta = eta;
  if (eta > 0.0) {
    const double base = feedback::labeled_loss(state.student.params, net, lbatch);
    auto probe = [&](const GradientVector& g) {
      return feedback::probe_along(state.student.params, net, lbatch, g, eta, cfg.normalize_probe, base);
    };
    if (vanilla) {
      const auto r = probe(g_student);
      raw.delta_agree = r.delta;
      raw.grad_norm_agree = r.grad_norm;
      raw.normalized = r.normalized;
    } else {
      if (cfg.feedback_terms != FeedbackTerms::DisagreeOnly) {
        const auto r = probe(tape_s.backward(loss::seg_loss(s_probs, bundle.fused, &bundle.agree_mask)));
        raw.delta_agree = r.delta;
        raw.grad_norm_agree = r.grad_norm;
        raw.normalized = r.normalized;
      }
      if (cfg.feedback_terms != FeedbackTerms::AgreeOnly) {
        const auto r = probe(tape_s.backward(loss::seg_loss(s_probs, bundle.fused, &bundle.disagree_mask)));
        raw.delta_disagree = r.delta;
        raw.grad_norm_disagree = r.grad_norm;
        raw.normalized = raw.normalized || r.normalized;
      }
    }
  }
  if (!std::isfinite(raw.delta_agree)) throw NonFiniteLoss("delta_a");
  if (!std::isfinite(raw.delta_disagree)) throw NonFiniteLoss("delta_d");
  rep.applied = raw;
  apply_overrides(rep.applied, cfg);

  // Receivers: per-teacher masks, or every pixel for vanilla feedback.
  const std::size_t B = bundle.fused.batch, H = bundle.fused.height, W = bundle.fused.width;
  pseudo::ReceiverMasks recv;
  if (vanilla) {
    recv.phi_agree = recv.psi_agree = PixelMask(B, H, W, 1);
    recv.phi_disagree = recv.psi_disagree = PixelMask(B, H, W, 0);
  } else {
    recv = pseudo::receiver_masks(bundle, cfg.pairing);
  }
  FeedbackSignal sig = rep.applied;
  sig.delta_agree *= cfg.feedback_weight;
  sig.delta_disagree *= cfg.feedback_weight;
  if (vanilla) sig.delta_disagree = 0.0;

  auto df_loss = [&](const TeacherPass& p, const LabelMap& own, const PixelMask& ra, const PixelMask& rd) {
    if (!strong_ll) return feedback::feedback_loss_dual(p.weak_probs, own, sig, ra, rd, cfg.likelihood_reduction);
    // Vacated pixels of the strong view carry no teacher label: drop them.
    const PixelMask valid = to_strong_view(PixelMask(B, H, W, 1), strong.specs);
    auto moved = [&](const PixelMask& m) {
      PixelMask out = to_strong_view(m, strong.specs);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] && valid[i];
      return out;
    };
    return feedback::feedback_loss_dual(p.strong_probs, to_strong_view(own, strong.specs), sig, moved(ra), moved(rd),
                                        cfg.likelihood_reduction);
  };

  const Tensor df_phi = df_loss(phi, bundle.label_phi, recv.phi_agree, recv.phi_disagree);
  rep.loss_df_phi = checked(df_phi, "loss_df_phi");
  Tensor total_phi = ag::add(phi.loss_l, df_phi);
  if (dual) {
    const Tensor df_psi = df_loss(*psi, bundle.label_psi, recv.psi_agree, recv.psi_disagree);
    rep.loss_df_psi = checked(df_psi, "loss_df_psi");
    Tensor total_psi = ag::add(psi->loss_l, df_psi);
    if (use_cs) {
      const std::span<const data::AugmentationSpec> specs =
          strong_cs ? std::span<const data::AugmentationSpec>(strong.specs) : std::span<const data::AugmentationSpec>();
      const Tensor cs_phi = cross_sup_loss(strong_cs ? phi.strong_probs : phi.weak_probs, bundle.label_psi,
                                           bundle.conf_psi, specs, cfg.confidence_threshold);
      const Tensor cs_psi = cross_sup_loss(strong_cs ? psi->strong_probs : psi->weak_probs, bundle.label_phi,
                                           bundle.conf_phi, specs, cfg.confidence_threshold);
      rep.loss_cs_phi = checked(cs_phi, "loss_cs_phi");
      rep.loss_cs_psi = checked(cs_psi, "loss_cs_psi");
      total_phi = ag::add(total_phi, ag::mul_scalar(cs_phi, rep.lambda));
      total_psi = ag::add(total_psi, ag::mul_scalar(cs_psi, rep.lambda));
    }
    sgd(state.psi, tape_psi.backward(total_psi), lr_t, cfg.teacher);
  }
  sgd(state.phi, tape_phi.backward(total_phi), lr_t, cfg.teacher);
  sgd(state.student, g_student, lr_s, cfg.student);
  ++state.step;
  return rep;
}

metrics::MetricsRecord evaluate_state(const TrainerState& state, const TrainConfig& cfg, const Corpus& corpus,
                                      const StepReport& last) {
  const std::size_t threads = eval::thread_count_from_env();
  metrics::MetricsRecord r;
  r.step = static_cast<std::int64_t>(state.step);
  auto& v = r.values;
  v["loss_l_phi"] = last.loss_l_phi;
  v["loss_l_psi"] = last.loss_l_psi;
  v["loss_df_phi"] = last.loss_df_phi;
  v["loss_df_psi"] = last.loss_df_psi;
  v["loss_cs_phi"] = last.loss_cs_phi;
  v["loss_cs_psi"] = last.loss_cs_psi;
  v["loss_student"] = last.loss_student;
  v["delta_a"] = last.applied.delta_agree;
  v["delta_d"] = last.applied.delta_disagree;
  v["lambda"] = last.lambda;

  const auto& unl = corpus.train.unlabeled;
  const std::span<const SegSample> probe_set(unl.data(), std::min(cfg.eval_train_samples, unl.size()));
  const auto ps = eval::score_pseudo(state.phi.params, state.psi.params, cfg.net, probe_set,
                                     cfg.mode == Mode::SingleTeacherFeedback, threads);
  v["pl_error_train"] = ps.pl_error;
  v["disag_train"] = ps.disagreement;
  v["fg_pixel_frac_pl"] = ps.fg_fraction;

  if (!corpus.test.empty()) {
    const auto s = eval::score(state.student.params, cfg.net, corpus.test, threads);
    v["dice_test_student"] = s.mean_dice();
    v["hd95_test_student"] = s.mean_hd95();
    v["dice_test_phi"] = eval::score(state.phi.params, cfg.net, corpus.test, threads).mean_dice();
    v["dice_test_psi"] = eval::score(state.psi.params, cfg.net, corpus.test, threads).mean_dice();
  }
  return r;
}

TrainerState train(const TrainConfig& cfg, const Corpus& corpus, std::optional<TrainerState> initial) {
  cfg.validate();
  TrainerState state = initial ? std::move(*initial) : init_state(cfg);
  BatchSampler lab(corpus.train.labeled.size(), cfg.batch_labeled, cfg.seed, kLabeledStream);
  BatchSampler unl(corpus.train.unlabeled.size(), cfg.batch_unlabeled, cfg.seed, kUnlabeledStream);
  std::vector<SegSample> lb, ub;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    lb.clear();
    ub.clear();
    for (std::size_t i : lab.indices(state.step)) lb.push_back(corpus.train.labeled[i]);
    for (std::size_t i : unl.indices(state.step)) ub.push_back(corpus.train.unlabeled[i]);
    const StepReport rep = train_step(state, cfg, lb, ub, t);
    if ((t + 1) % cfg.eval_interval == 0 || t + 1 == cfg.steps)
      state.history.push_back(evaluate_state(state, cfg, corpus, rep));
  }
  if (cfg.finetune_steps > 0 && cfg.mode != Mode::FullySupervised) {
    state.student.params =
        finetune_student(state.student.params, cfg, corpus.train.labeled, cfg.finetune_steps, cfg.finetune_lr);
    StepReport none;
    state.history.push_back(evaluate_state(state, cfg, corpus, none));
  }
  return state;
}

ModelParams finetune_student(const ModelParams& student, const TrainConfig& cfg, std::span<const SegSample> labeled,
                             std::size_t steps, double lr) {
  ModelState m{student, ag::zeros_like(student)};
  if (steps == 0) return student;
  BatchSampler sampler(labeled.size(), cfg.batch_labeled, cfg.seed, kFinetuneStream);
  std::vector<SegSample> batch;
  for (std::size_t t = 0; t < steps; ++t) {
    batch.clear();
    for (std::size_t i : sampler.indices(t)) batch.push_back(labeled[i]);
    ag::Tape tape;
    const ModelParams tracked = tape.watch(m.params);
    const Tensor l = loss::seg_loss(segnet::forward(tracked, cfg.net, data::stack_images(batch)), labels_of(batch));
    checked(l, "loss_finetune");
    sgd(m, tape.backward(l), lr, cfg.student);
  }
  return m.params;
}

void write_run(const std::filesystem::path& dir, const TrainerState& state, const TrainConfig& cfg,
               const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  write_csv(dir / "log.csv", state.history);
  {
    std::ofstream f(dir / "config.echo.json", std::ios::binary);
    f << config_to_json(cfg);
  }
  segnet::save_checkpoint(state.phi.params, dir / "phi.dfte");
  segnet::save_checkpoint(state.psi.params, dir / "psi.dfte");
  segnet::save_checkpoint(state.student.params, dir / "student.dfte");
  if (!is_dual(cfg.mode)) return;

  const auto& L = corpus.train.labeled;
  const auto& U = corpus.train.unlabeled;
  const std::span<const SegSample> lab(L.data(), std::min(cfg.batch_labeled, L.size()));
  const std::span<const SegSample> unl(U.data(), std::min(cfg.batch_unlabeled, U.size()));
  const LabeledBatch lbatch{data::stack_images(lab), labels_of(lab)};
  const Tensor xu = data::stack_images(unl);
  const auto bundle = pseudo::fuse_dual(segnet::forward(state.phi.params, cfg.net, xu),
                                        segnet::forward(state.psi.params, cfg.net, xu));
  const double eta = cfg.probe_eta.value_or(cfg.student.lr);
  auto change = [&](const PixelMask& m) {
    const auto g = feedback::attributor_gradient(state.student.params, cfg.net, xu, bundle.fused, m);
    return feedback::loss_change_map(state.student.params, cfg.net, lbatch, g, eta, cfg.normalize_probe);
  };
  const auto agree = change(bundle.agree_mask);
  const auto disagree = change(bundle.disagree_mask);
  std::vector<std::vector<std::string>> rows;
  const std::size_t H = cfg.net.height, W = cfg.net.width;
  for (std::size_t b = 0; b < lab.size(); ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t i = (b * H + y) * W + x;
        rows.push_back({std::to_string(lab[b].id), std::to_string(y), std::to_string(x), format_double(agree[i]),
                        format_double(disagree[i])});
      }
  write_table(dir / "feedback_map.csv", {"sample_id", "y", "x", "agree", "disagree"}, rows);
}

}  // namespace dualfete::train
