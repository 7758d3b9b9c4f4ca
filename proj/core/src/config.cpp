#include "dualfete/config.hpp"

#include <array>
#include <set>
#include <span>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "dualfete/error.hpp"

namespace dualfete::train {
namespace {

using nlohmann::json;

constexpr std::array kModes{
    std::pair{Mode::FullySupervised, "fully_supervised"},
    std::pair{Mode::SingleTeacherFeedback, "single_teacher_feedback"},
    std::pair{Mode::DualNoFeedback, "dual_no_feedback"},
    std::pair{Mode::DualFete, "dualfete"},
};
constexpr std::array kSigns{
    std::pair{ForcedSign::None, "none"},           std::pair{ForcedSign::Zero, "zero"},
    std::pair{ForcedSign::AgreeNeg, "agree_neg"},  std::pair{ForcedSign::DisagreeNeg, "disagree_neg"},
    std::pair{ForcedSign::DisagreePos, "disagree_pos"}, std::pair{ForcedSign::BothNeg, "both_neg"},
};
constexpr std::array kTerms{
    std::pair{FeedbackTerms::Both, "both"},
    std::pair{FeedbackTerms::AgreeOnly, "agree_only"},
    std::pair{FeedbackTerms::DisagreeOnly, "disagree_only"},
    std::pair{FeedbackTerms::Vanilla, "vanilla"},
};
constexpr std::array kPairings{
    std::pair{pseudo::Pairing::Matched, "matched"},
    std::pair{pseudo::Pairing::Mismatched, "mismatched"},
};
constexpr std::array kReductions{
    std::pair{loss::Reduction::Mean, "mean"},
    std::pair{loss::Reduction::Sum, "sum"},
};

template <class E, std::size_t N>
const char* name_of(const std::array<std::pair<E, const char*>, N>& table, E v) {
  for (const auto& [e, n] : table)
    if (e == v) return n;
  return "?";
}

// Reads fields from one JSON object and remembers which keys were consumed,
// so leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    out = convert<T>(*v, field(key));
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    if (v->is_null()) {
      out.reset();
      return;
    }
    out = convert<T>(*v, field(key));
  }

  template <class E, std::size_t N>
  void get_enum(const char* key, E& out, const std::array<std::pair<E, const char*>, N>& table) {
    const json* v = take(key);
    if (v == nullptr) return;
    const auto s = convert<std::string>(*v, field(key));
    for (const auto& [e, n] : table)
      if (s == n) {
        out = e;
        return;
      }
    std::string allowed;
    for (const auto& [e, n] : table) allowed += (allowed.empty() ? "" : "|") + std::string(n);
    throw ConfigError(field(key), "unknown value '" + s + "' (expected " + allowed + ")");
  }

  Reader child(const char* key) {
    const json* v = take(key);
    static const json empty = json::object();
    return Reader(v == nullptr ? empty : *v, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.contains(k)) throw ConfigError(field(k.c_str()), "unknown key");
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  static T convert(const json& v, const std::string& name) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(name, "expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(name, "expected a number");
    } else {
      if (!v.is_string()) throw ConfigError(name, "expected a string");
    }
    return v.get<T>();
  }

  const json& obj_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

void read_optim(Reader r, OptimConfig& o) {
  r.get("lr", o.lr);
  r.get("momentum", o.momentum);
  r.get("weight_decay", o.weight_decay);
  r.get("max_grad_norm", o.max_grad_norm);
  r.finish();
}

json optim_json(const OptimConfig& o) { return {{"lr", o.lr}, {"momentum", o.momentum}, {"weight_decay", o.weight_decay}, {"max_grad_norm", o.max_grad_norm}}; }

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

std::size_t TrainConfig::effective_ramp_steps() const {
  if (ramp_steps) return *ramp_steps;
  return std::max<std::size_t>(1, (steps * 3) / 10);
}

void TrainConfig::validate() const {
  check(eval_interval > 0, "eval_interval", "must be > 0");
  check(batch_labeled > 0, "batch_labeled", "must be > 0");
  check(batch_unlabeled > 0, "batch_unlabeled", "must be > 0");
  check(confidence_threshold >= 0.0 && confidence_threshold <= 1.0, "confidence_threshold", "must lie in [0, 1]");
  for (const auto& [name, o] : {std::pair{"student", &student}, std::pair{"teacher", &teacher}}) {
    const std::string p(name);
    check(o->lr >= 0.0, p + ".lr", "must be >= 0");
    check(o->momentum >= 0.0 && o->momentum < 1.0, p + ".momentum", "must lie in [0, 1)");
    check(o->weight_decay >= 0.0, p + ".weight_decay", "must be >= 0");
    check(o->max_grad_norm >= 0.0, p + ".max_grad_norm", "must be >= 0 (0 disables clipping)");
  }
  check(!probe_eta || *probe_eta > 0.0, "probe_eta", "must be > 0");
  check(lambda_max >= 0.0, "lambda_max", "must be >= 0");
  check(!ramp_steps || *ramp_steps > 0, "ramp_steps", "must be > 0");
  check(forced_delta_floor >= 0.0, "forced_delta_floor", "must be >= 0");
  check(finetune_lr >= 0.0, "finetune_lr", "must be >= 0");
  check(data.ambiguity >= 0.0 && data.ambiguity <= 1.0, "data.ambiguity", "must lie in [0, 1]");
  check(data.labeled_ratio > 0.0 && data.labeled_ratio < 1.0, "data.labeled_ratio", "must lie in (0, 1)");
  check(!data.dir.empty() || data.n_train > 0, "data.n_train", "must be > 0");
  try {
    net.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError("net", e.what());
  }
}

TrainConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  TrainConfig c;
  Reader r(doc, "");
  r.get("seed", c.seed);
  r.get("phi_seed", c.phi_seed);
  r.get("psi_seed", c.psi_seed);
  r.get("student_seed", c.student_seed);
  r.get("steps", c.steps);
  r.get("eval_interval", c.eval_interval);
  r.get("eval_train_samples", c.eval_train_samples);
  r.get("batch_labeled", c.batch_labeled);
  r.get("batch_unlabeled", c.batch_unlabeled);
  read_optim(r.child("student"), c.student);
  read_optim(r.child("teacher"), c.teacher);
  r.get("poly_power", c.poly_power);
  r.get("probe_eta", c.probe_eta);
  r.get("normalize_probe", c.normalize_probe);
  r.get("lambda_max", c.lambda_max);
  r.get("ramp_steps", c.ramp_steps);
  r.get("confidence_threshold", c.confidence_threshold);
  r.get_enum("mode", c.mode, kModes);
  r.get_enum("attributor_receiver_pairing", c.pairing, kPairings);
  r.get_enum("forced_sign", c.forced_sign, kSigns);
  r.get("forced_delta_floor", c.forced_delta_floor);
  r.get_enum("feedback_terms", c.feedback_terms, kTerms);
  r.get("cross_supervision", c.cross_supervision);
  r.get("strong_aug_cs", c.strong_aug_cs);
  r.get("strong_aug_likelihood", c.strong_aug_likelihood);
  r.get_enum("likelihood_reduction", c.likelihood_reduction, kReductions);
  r.get("feedback_weight", c.feedback_weight);
  r.get("finetune_steps", c.finetune_steps);
  r.get("finetune_lr", c.finetune_lr);

  Reader n = r.child("net");
  n.get("height", c.net.height);
  n.get("width", c.net.width);
  n.get("base_channels", c.net.base_channels);
  n.get("depth", c.net.depth);
  n.get("num_classes", c.net.num_classes);
  n.get("dropout_rate", c.net.dropout_rate);
  n.finish();

  Reader d = r.child("data");
  d.get("seed", c.data.seed);
  d.get("n_train", c.data.n_train);
  d.get("n_test", c.data.n_test);
  d.get("ambiguity", c.data.ambiguity);
  d.get("labeled_ratio", c.data.labeled_ratio);
  d.get("dir", c.data.dir);
  d.finish();

  r.finish();
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const TrainConfig& c) {
  json j = json::object();
  j["seed"] = c.seed;
  j["phi_seed"] = opt_json(c.phi_seed);
  j["psi_seed"] = opt_json(c.psi_seed);
  j["student_seed"] = opt_json(c.student_seed);
  j["steps"] = c.steps;
  j["eval_interval"] = c.eval_interval;
  j["eval_train_samples"] = c.eval_train_samples;
  j["batch_labeled"] = c.batch_labeled;
  j["batch_unlabeled"] = c.batch_unlabeled;
  j["student"] = optim_json(c.student);
  j["teacher"] = optim_json(c.teacher);
  j["poly_power"] = c.poly_power;
  j["probe_eta"] = opt_json(c.probe_eta);
  j["normalize_probe"] = c.normalize_probe;
  j["lambda_max"] = c.lambda_max;
  j["ramp_steps"] = opt_json(c.ramp_steps);
  j["confidence_threshold"] = c.confidence_threshold;
  j["mode"] = name_of(kModes, c.mode);
  j["attributor_receiver_pairing"] = name_of(kPairings, c.pairing);
  j["forced_sign"] = name_of(kSigns, c.forced_sign);
  j["forced_delta_floor"] = c.forced_delta_floor;
  j["feedback_terms"] = name_of(kTerms, c.feedback_terms);
  j["cross_supervision"] = c.cross_supervision;
  j["strong_aug_cs"] = c.strong_aug_cs;
  j["strong_aug_likelihood"] = c.strong_aug_likelihood;
  j["likelihood_reduction"] = name_of(kReductions, c.likelihood_reduction);
  j["feedback_weight"] = c.feedback_weight;
  j["finetune_steps"] = c.finetune_steps;
  j["finetune_lr"] = c.finetune_lr;
  j["net"] = {{"height", c.net.height},         {"width", c.net.width},
              {"base_channels", c.net.base_channels}, {"depth", c.net.depth},
              {"num_classes", c.net.num_classes}, {"dropout_rate", c.net.dropout_rate}};
  j["data"] = {{"seed", c.data.seed},       {"n_train", c.data.n_train},
               {"n_test", c.data.n_test},   {"ambiguity", c.data.ambiguity},
               {"labeled_ratio", c.data.labeled_ratio}, {"dir", c.data.dir}};
  return j.dump(2) + "\n";
}

std::string to_string(Mode m) { return name_of(kModes, m); }
std::string to_string(ForcedSign s) { return name_of(kSigns, s); }
std::string to_string(FeedbackTerms t) { return name_of(kTerms, t); }

}  // namespace dualfete::train
