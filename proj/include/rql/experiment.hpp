#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "rql/attack.hpp"
#include "rql/bellman.hpp"
#include "rql/fig1.hpp"
#include "rql/io.hpp"
#include "rql/qlearning.hpp"
#include "rql/stats.hpp"

namespace rql {

struct Fig1Spec {
  double p = 0.5;
  double d = 1.0;
  double kappa = 1.0;
  double gamma = 0.9;
  std::optional<double> epsilon;  ///< falls back to the attack budget
  double reward_noise = 0.0;      ///< half-width of uniform noise added around every reward

  friend bool operator==(const Fig1Spec&, const Fig1Spec&) = default;
};

/// Exactly one of: the counterexample MDP, an MDP file, or an inline MDP document.
struct MdpSpec {
  std::optional<Fig1Spec> fig1;
  std::optional<std::string> file;
  std::optional<json> inline_mdp;

  friend bool operator==(const MdpSpec&, const MdpSpec&) = default;
};

struct AttackSpec {
  std::string strategy = "none";
  std::optional<double> epsilon;  ///< falls back to the counterexample's epsilon
  double magnitude = 1e6;
  double offset = 0.0;
  std::vector<double> targets;
  std::vector<std::optional<RewardModel>> corruption;
  bool per_pair_coin = false;
  bool enforce_budget = true;

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

struct LearnerSpec {
  std::string kind = "robust";
  std::size_t horizon = 1000;
  std::optional<double> epsilon;  ///< falls back to the attack budget
  double delta = 0.05;
  double universal_constant = 1.0;
  double reward_scale = 1.0;
  std::optional<double> step_size;
  std::size_t retrim_every = 1;
  std::string schedule = "robbins-monro";
  double alpha = 0.1;
  double a = 1.0;
  double b = 10.0;
  std::string reference = "q_star";  ///< or "q_tilde": fixed point of the Huber-perturbed operator

  friend bool operator==(const LearnerSpec&, const LearnerSpec&) = default;
};

struct RateCheckSpec {
  std::size_t grid_points = 8;
  double min_horizon_fraction = 0.01;
  double fit_upper_fraction = 0.5;  ///< share of the horizon grid (largest horizons) used in the fit
  std::vector<double> plateau_epsilons;
  double plateau_fraction = 0.1;
  AttackSpec plateau_attack;
  std::optional<MdpSpec> plateau_mdp;
  std::optional<double> plateau_reward_scale;

  friend bool operator==(const RateCheckSpec&, const RateCheckSpec&) = default;
};

struct ExperimentConfig {
  MdpSpec mdp;
  AttackSpec attack;
  LearnerSpec learner;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<double>> sweep;
  std::string out = "runs";
  std::size_t workers = 1;
  RateCheckSpec rate_check;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

/// Reads fields of one JSON object, rejecting unknown keys and naming the offending path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("field '" + display() + "': expected an object");
  }

  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("field '" + field(key) + "': unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_number()) throw ConfigError("field '" + field(key) + "': expected a number");
    out = j_.at(key).get<double>();
  }

  void number(const std::string& key, std::optional<double>& out) {
    if (!has(key)) {
      out.reset();
      return;
    }
    double v = 0.0;
    number(key, v);
    out = v;
  }

  void count(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_number_unsigned()) throw ConfigError("field '" + field(key) + "': expected a non-negative integer");
    out = j_.at(key).get<std::size_t>();
  }

  void seed(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_number_unsigned()) throw ConfigError("field '" + field(key) + "': expected a non-negative integer");
    out = j_.at(key).get<std::uint64_t>();
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError("field '" + field(key) + "': expected a string");
    out = j_.at(key).get<std::string>();
  }

  void text(const std::string& key, std::optional<std::string>& out) {
    if (!has(key)) {
      out.reset();
      return;
    }
    std::string v;
    text(key, v);
    out = v;
  }

  void flag(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError("field '" + field(key) + "': expected true or false");
    out = j_.at(key).get<bool>();
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError("field '" + field(key) + "': expected an array of numbers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError("field '" + field(key) + "[" + std::to_string(i) + "]': expected a number");
      out.push_back(v[i].get<double>());
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

inline json to_json(const Fig1Spec& f) {
  return {{"p", f.p}, {"d", f.d}, {"kappa", f.kappa}, {"gamma", f.gamma},
          {"epsilon", detail::optional_number(f.epsilon)}, {"reward_noise", f.reward_noise}};
}

inline json to_json(const MdpSpec& m) {
  json j = json::object();
  if (m.fig1) j["fig1"] = to_json(*m.fig1);
  if (m.file) j["file"] = *m.file;
  if (m.inline_mdp) j["inline"] = *m.inline_mdp;
  return j;
}

inline json to_json(const AttackSpec& a) {
  json corruption = json::array();
  for (const auto& c : a.corruption) corruption.push_back(c ? reward_model_to_json(*c) : json(nullptr));
  return {{"strategy", a.strategy},         {"epsilon", detail::optional_number(a.epsilon)},
          {"magnitude", a.magnitude},       {"offset", a.offset},
          {"targets", a.targets},           {"corruption", std::move(corruption)},
          {"per_pair_coin", a.per_pair_coin}, {"enforce_budget", a.enforce_budget}};
}

inline json to_json(const LearnerSpec& l) {
  return {{"kind", l.kind},
          {"horizon", l.horizon},
          {"epsilon", detail::optional_number(l.epsilon)},
          {"delta", l.delta},
          {"universal_constant", l.universal_constant},
          {"reward_scale", l.reward_scale},
          {"step_size", detail::optional_number(l.step_size)},
          {"retrim_every", l.retrim_every},
          {"schedule", l.schedule},
          {"alpha", l.alpha},
          {"a", l.a},
          {"b", l.b},
          {"reference", l.reference}};
}

inline json to_json(const RateCheckSpec& r) {
  return {{"grid_points", r.grid_points},
          {"min_horizon_fraction", r.min_horizon_fraction},
          {"fit_upper_fraction", r.fit_upper_fraction},
          {"plateau_epsilons", r.plateau_epsilons},
          {"plateau_fraction", r.plateau_fraction},
          {"plateau_attack", to_json(r.plateau_attack)},
          {"plateau_mdp", r.plateau_mdp ? to_json(*r.plateau_mdp) : json(nullptr)},
          {"plateau_reward_scale", detail::optional_number(r.plateau_reward_scale)}};
}

inline json to_json(const ExperimentConfig& c) {
  json sweep = json::object();
  for (const auto& [axis, values] : c.sweep) sweep[axis] = values;
  return {{"mdp", to_json(c.mdp)},         {"attack", to_json(c.attack)}, {"learner", to_json(c.learner)},
          {"trials", c.trials},            {"seed", c.seed},              {"sweep", std::move(sweep)},
          {"out", c.out},                  {"workers", c.workers},        {"rate_check", to_json(c.rate_check)}};
}

inline Fig1Spec fig1_spec_from_json(const json& j, const std::string& path) {
  Fig1Spec f;
  detail::ObjectReader r(j, path);
  r.number("p", f.p);
  r.number("d", f.d);
  r.number("kappa", f.kappa);
  r.number("gamma", f.gamma);
  r.number("epsilon", f.epsilon);
  r.number("reward_noise", f.reward_noise);
  return f;
}

inline MdpSpec mdp_spec_from_json(const json& j, const std::string& path) {
  MdpSpec m;
  detail::ObjectReader r(j, path);
  if (r.has("fig1")) m.fig1 = fig1_spec_from_json(r.raw("fig1"), r.field("fig1"));
  r.text("file", m.file);
  if (r.has("inline")) m.inline_mdp = r.raw("inline");
  const int given = (m.fig1 ? 1 : 0) + (m.file ? 1 : 0) + (m.inline_mdp ? 1 : 0);
  if (given != 1) throw ConfigError("field '" + path + "': give exactly one of 'fig1', 'file', 'inline'");
  return m;
}

inline AttackSpec attack_spec_from_json(const json& j, const std::string& path) {
  AttackSpec a;
  detail::ObjectReader r(j, path);
  r.text("strategy", a.strategy);
  r.number("epsilon", a.epsilon);
  r.number("magnitude", a.magnitude);
  r.number("offset", a.offset);
  r.numbers("targets", a.targets);
  if (r.has("corruption")) {
    const json& c = r.raw("corruption");
    if (!c.is_array()) throw ConfigError("field '" + r.field("corruption") + "': expected an array");
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i].is_null()) a.corruption.emplace_back();
      else a.corruption.emplace_back(reward_model_from_json(c[i], r.field("corruption") + "[" + std::to_string(i) + "]"));
    }
  }
  r.flag("per_pair_coin", a.per_pair_coin);
  r.flag("enforce_budget", a.enforce_budget);
  static const std::set<std::string> known{"none", "huber", "sign-flip-large", "constant-shift", "fixed-point-shift"};
  if (!known.count(a.strategy)) throw ConfigError("field '" + r.field("strategy") + "': unknown strategy '" + a.strategy + "'");
  return a;
}

inline LearnerSpec learner_spec_from_json(const json& j, const std::string& path) {
  LearnerSpec l;
  detail::ObjectReader r(j, path);
  r.text("kind", l.kind);
  r.count("horizon", l.horizon);
  r.number("epsilon", l.epsilon);
  r.number("delta", l.delta);
  r.number("universal_constant", l.universal_constant);
  r.number("reward_scale", l.reward_scale);
  r.number("step_size", l.step_size);
  r.count("retrim_every", l.retrim_every);
  r.text("schedule", l.schedule);
  r.number("alpha", l.alpha);
  r.number("a", l.a);
  r.number("b", l.b);
  r.text("reference", l.reference);
  if (l.kind != "robust" && l.kind != "vanilla")
    throw ConfigError("field '" + r.field("kind") + "': expected 'robust' or 'vanilla'");
  if (l.schedule != "robbins-monro" && l.schedule != "constant")
    throw ConfigError("field '" + r.field("schedule") + "': expected 'robbins-monro' or 'constant'");
  if (l.reference != "q_star" && l.reference != "q_tilde")
    throw ConfigError("field '" + r.field("reference") + "': expected 'q_star' or 'q_tilde'");
  if (l.horizon == 0) throw ConfigError("field '" + r.field("horizon") + "': must be positive");
  return l;
}

inline RateCheckSpec rate_check_spec_from_json(const json& j, const std::string& path) {
  RateCheckSpec s;
  detail::ObjectReader r(j, path);
  r.count("grid_points", s.grid_points);
  r.number("min_horizon_fraction", s.min_horizon_fraction);
  r.number("fit_upper_fraction", s.fit_upper_fraction);
  r.numbers("plateau_epsilons", s.plateau_epsilons);
  r.number("plateau_fraction", s.plateau_fraction);
  if (r.has("plateau_attack")) s.plateau_attack = attack_spec_from_json(r.raw("plateau_attack"), r.field("plateau_attack"));
  if (r.has("plateau_mdp")) s.plateau_mdp = mdp_spec_from_json(r.raw("plateau_mdp"), r.field("plateau_mdp"));
  r.number("plateau_reward_scale", s.plateau_reward_scale);
  if (s.grid_points < 2) throw ConfigError("field '" + r.field("grid_points") + "': need at least 2 horizons");
  return s;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  detail::ObjectReader r(j, "");
  if (!r.has("mdp")) throw ConfigError("field 'mdp': missing");
  c.mdp = mdp_spec_from_json(r.raw("mdp"), "mdp");
  if (r.has("attack")) c.attack = attack_spec_from_json(r.raw("attack"), "attack");
  if (r.has("learner")) c.learner = learner_spec_from_json(r.raw("learner"), "learner");
  r.count("trials", c.trials);
  r.seed("seed", c.seed);
  if (r.has("sweep")) {
    const json& s = r.raw("sweep");
    if (!s.is_object()) throw ConfigError("field 'sweep': expected an object of axis -> values");
    for (const auto& [axis, values] : s.items()) {
      if (!values.is_array() || values.empty())
        throw ConfigError("field 'sweep." + axis + "': expected a non-empty array");
      std::vector<double> v;
      for (const auto& x : values) {
        if (!x.is_number()) throw ConfigError("field 'sweep." + axis + "': expected numbers");
        v.push_back(x.get<double>());
      }
      c.sweep[axis] = std::move(v);
    }
  }
  r.text("out", c.out);
  r.count("workers", c.workers);
  if (r.has("rate_check")) c.rate_check = rate_check_spec_from_json(r.raw("rate_check"), "rate_check");
  if (c.trials == 0) throw ConfigError("field 'trials': must be at least 1");
  if (c.workers == 0) c.workers = 1;
  return c;
}

// ---------------------------------------------------------------------------
// Sweeps

inline std::string axis_pointer(const std::string& axis) {
  std::string p = "/";
  for (char ch : axis) p += ch == '.' ? '/' : ch;
  return p;
}

struct SweepPoint {
  std::string name;  ///< "base" without axes, otherwise "axis=value,axis=value"
  ExperimentConfig config;
};

inline std::string format_axis_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// Cartesian product of the sweep axes (in axis-name order), each applied on top of the base config.
inline std::vector<SweepPoint> expand_sweep(const ExperimentConfig& base) {
  const json doc = to_json(base);
  for (const auto& [axis, _] : base.sweep) {
    if (axis.rfind("sweep", 0) == 0 || !doc.contains(json::json_pointer(axis_pointer(axis))))
      throw ConfigError("sweep axis '" + axis + "' does not name a config key");
    const json& target = doc.at(json::json_pointer(axis_pointer(axis)));
    if (!target.is_null() && !target.is_number())
      throw ConfigError("sweep axis '" + axis + "' does not name a numeric config key");
  }
  std::vector<SweepPoint> points;
  if (base.sweep.empty()) {
    points.push_back({"base", base});
    return points;
  }

  std::vector<std::pair<std::string, const std::vector<double>*>> axes;
  for (const auto& [axis, values] : base.sweep) axes.emplace_back(axis, &values);
  std::vector<std::size_t> index(axes.size(), 0);
  for (;;) {
    json j = doc;
    std::string name;
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const double v = (*axes[k].second)[index[k]];
      const std::string& axis = axes[k].first;
      json& slot = j.at(json::json_pointer(axis_pointer(axis)));
      if (slot.is_number_unsigned() || slot.is_number_integer()) {
        if (v < 0.0 || v != std::floor(v)) throw ConfigError("sweep axis '" + axis + "': expected integer values");
        slot = static_cast<std::uint64_t>(v);
      } else {
        slot = v;
      }
      if (!name.empty()) name += ',';
      name += axis + "=" + format_axis_value(v);
    }
    j["sweep"] = json::object();
    ExperimentConfig point = experiment_config_from_json(j);
    point.sweep.clear();
    points.push_back({name, std::move(point)});

    std::size_t k = axes.size();
    while (k > 0) {
      --k;
      if (++index[k] < axes[k].second->size()) break;
      index[k] = 0;
      if (k == 0) return points;
    }
  }
}

// ---------------------------------------------------------------------------
// Resolution into runnable objects

/// Everything needed to execute one learner run, independent of the seed.
struct ResolvedRun {
  TabularMdp mdp;
  Adversary adversary;
  bool robust = true;
  VanillaConfig vanilla;
  RobustConfig robust_cfg;
  QTable reference;
  std::optional<fig1::Params> fig1;
};

namespace detail {

inline Strategy parse_strategy(const std::string& s) {
  if (s == "none") return Strategy::none;
  if (s == "huber") return Strategy::huber;
  if (s == "sign-flip-large") return Strategy::sign_flip_large;
  if (s == "constant-shift") return Strategy::constant_shift;
  if (s == "fixed-point-shift") return Strategy::fixed_point_shift;
  throw ConfigError("unknown attack strategy '" + s + "'");
}

}  // namespace detail

struct ResolvedMdp {
  TabularMdp mdp;
  std::optional<fig1::Params> fig1;  ///< set when the counterexample is fully specified (epsilon > 0)
};

inline ResolvedMdp resolve_mdp(const MdpSpec& spec, std::optional<double> attack_epsilon,
                               const std::filesystem::path& base_dir) {
  try {
    if (spec.fig1) {
      const Fig1Spec& f = *spec.fig1;
      const double eps = f.epsilon.value_or(attack_epsilon.value_or(0.0));
      TabularMdp mdp = fig1::make_mdp(f.p, f.d, f.gamma, f.reward_noise);
      std::optional<fig1::Params> params;
      if (eps > 0.0) {
        params = fig1::Params{f.p, f.d, f.kappa, eps, f.gamma};
        params->validate();
      } else if (!(f.p > 0.0 && f.p < 1.0) || !(f.d > 0.0) || !(f.kappa > 0.0)) {
        throw ConfigError("mdp.fig1: p must lie in (0,1), d and kappa must be positive");
      }
      return {std::move(mdp), params};
    }
    if (spec.file) {
      std::filesystem::path p(*spec.file);
      if (p.is_relative()) p = base_dir / p;
      return {mdp_from_json(load_json_file(p.string())), std::nullopt};
    }
    return {mdp_from_json(*spec.inline_mdp), std::nullopt};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("mdp: ") + e.what());
  }
}

inline Adversary build_adversary(const AttackSpec& spec, const TabularMdp& mdp, const std::optional<fig1::Params>& fig1,
                                 double epsilon) {
  const Strategy strategy = detail::parse_strategy(spec.strategy);
  try {
    Adversary adv = Adversary::none();
    switch (strategy) {
      case Strategy::none: adv = Adversary::none(); break;
      case Strategy::huber: {
        auto corruption = spec.corruption;
        if (corruption.empty() && fig1) corruption = fig1::huber_corruption(fig1->corruption_signal());
        if (corruption.empty() && epsilon > 0.0)
          throw ConfigError("attack.corruption: huber needs one corruption model (or null) per pair");
        if (!corruption.empty() && corruption.size() != mdp.num_pairs())
          throw ConfigError("attack.corruption: expected " + std::to_string(mdp.num_pairs()) + " entries");
        adv = Adversary::huber(epsilon, std::move(corruption), spec.per_pair_coin);
        break;
      }
      case Strategy::sign_flip_large: adv = Adversary::sign_flip_large(epsilon, spec.magnitude); break;
      case Strategy::constant_shift: adv = Adversary::constant_shift(epsilon, spec.offset); break;
      case Strategy::fixed_point_shift: {
        std::vector<double> targets = spec.targets;
        if (targets.empty() && fig1) {
          targets.assign(mdp.mean_rewards().begin(), mdp.mean_rewards().end());
          const double C = fig1->corruption_signal();
          targets[mdp.pair_index(fig1::kStart, fig1::kLeft)] = -C;
          targets[mdp.pair_index(fig1::kStart, fig1::kRight)] = C;
        }
        if (targets.size() != mdp.num_pairs())
          throw ConfigError("attack.targets: expected " + std::to_string(mdp.num_pairs()) + " entries");
        adv = Adversary::fixed_point_shift(epsilon, std::move(targets));
        break;
      }
      case Strategy::custom: break;
    }
    adv.enforce_budget(spec.enforce_budget);
    return adv;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
}

inline ResolvedRun resolve(const ExperimentConfig& cfg, const std::filesystem::path& base_dir = ".") {
  std::optional<double> attack_eps = cfg.attack.epsilon;
  if (!attack_eps && cfg.mdp.fig1 && cfg.mdp.fig1->epsilon) attack_eps = cfg.mdp.fig1->epsilon;
  ResolvedMdp rm = resolve_mdp(cfg.mdp, attack_eps, base_dir);
  const double eps = attack_eps.value_or(0.0);

  Adversary adversary = build_adversary(cfg.attack, rm.mdp, rm.fig1, eps);

  QTable q_star = solve_q_star(rm.mdp, 1e-10);
  QTable reference = q_star;
  if (cfg.learner.reference == "q_tilde") {
    if (adversary.strategy() == Strategy::huber && !adversary.corruption().empty()) {
      const auto means = fig1::huber_mixture_means(rm.mdp, adversary.corruption(), eps);
      reference = solve_q_star(perturbed_mdp(rm.mdp, means), 1e-10);
    } else if (adversary.strategy() != Strategy::none && eps > 0.0) {
      throw ConfigError("learner.reference: q_tilde is defined for the huber attack only");
    }
  }

  ResolvedRun run{std::move(rm.mdp), std::move(adversary), cfg.learner.kind == "robust", {}, {}, std::move(reference),
                  rm.fig1};
  const LearnerSpec& l = cfg.learner;
  run.vanilla.horizon = l.horizon;
  run.vanilla.schedule =
      l.schedule == "constant" ? StepSchedule::constant(l.alpha) : StepSchedule::robbins_monro(l.a, l.b);
  run.robust_cfg.epsilon = l.epsilon.value_or(eps);
  run.robust_cfg.delta = l.delta;
  run.robust_cfg.horizon = l.horizon;
  run.robust_cfg.universal_constant = l.universal_constant;
  run.robust_cfg.reward_scale = l.reward_scale;
  run.robust_cfg.step_size = l.step_size;
  run.robust_cfg.retrim_every = l.retrim_every;
  try {
    if (run.robust) run.robust_cfg.validate(run.mdp);
    else run.vanilla.schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("learner: ") + e.what());
  }
  return run;
}

inline RunTrace run_trial(const ResolvedRun& run, std::uint64_t seed) {
  if (run.robust) {
    RobustConfig cfg = run.robust_cfg;
    cfg.seed = seed;
    return run_robust(run.mdp, run.adversary, cfg, run.reference);
  }
  VanillaConfig cfg = run.vanilla;
  cfg.seed = seed;
  return run_vanilla(run.mdp, run.adversary, cfg, run.reference);
}

// ---------------------------------------------------------------------------
// Execution and aggregation

/// Runs fn(0..count-1) on up to `workers` threads; rethrows the first failure after joining.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct AggregateRow {
  std::string sweep_point;
  std::size_t trials = 0;
  Summary final_error;
};

struct BandRow {
  std::size_t t = 0;
  Summary error;
};

/// Summary of final d_T and per-t percentile bands over the traces of one sweep point.
inline AggregateRow aggregate_final(const std::string& name, const std::vector<std::vector<TraceRow>>& traces) {
  std::vector<double> finals;
  for (const auto& rows : traces) finals.push_back(rows.back().error);
  return {name, traces.size(), summarize(finals)};
}

inline std::vector<BandRow> aggregate_bands(const std::vector<std::vector<TraceRow>>& traces) {
  std::vector<BandRow> bands;
  if (traces.empty()) return bands;
  const std::size_t n = traces.front().size();
  std::vector<double> column(traces.size());
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < traces.size(); ++k) column[k] = traces[k].at(t).error;
    bands.push_back({traces.front()[t].t, summarize(column)});
  }
  return bands;
}

inline constexpr const char* kAggregateHeader = "sweep_point,trials,mean,median,p10,p90";
inline constexpr const char* kBandsHeader = "sweep_point,t,mean,median,p10,p90";

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << kAggregateHeader << '\n';
  for (const auto& r : rows) {
    os << '"' << r.sweep_point << "\"," << r.trials << ',' << format_double(r.final_error.mean) << ','
       << format_double(r.final_error.median) << ',' << format_double(r.final_error.p10) << ','
       << format_double(r.final_error.p90) << '\n';
  }
}

inline void write_bands_csv(std::ostream& os, const std::string& name, const std::vector<BandRow>& bands) {
  for (const auto& b : bands) {
    os << '"' << name << "\"," << b.t << ',' << format_double(b.error.mean) << ',' << format_double(b.error.median)
       << ',' << format_double(b.error.p10) << ',' << format_double(b.error.p90) << '\n';
  }
}

struct ExperimentResult {
  std::vector<AggregateRow> aggregate;
  std::vector<std::filesystem::path> trace_files;
};

inline std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t trial) { return base_seed + trial; }

/**
 * Runs trials x sweep-points learners and writes `{out}/{point}/{seed}.csv` (trace) and
 * `{seed}.q.json` (final table) per run, then `aggregate.csv` and `aggregate_bands.csv` after all runs finish. Refuses to
 * write into a non-empty output directory unless `force` is set.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool force,
                                       const std::filesystem::path& base_dir = ".") {
  namespace fs = std::filesystem;
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
    throw ConfigError("output directory '" + out_dir.string() + "' already exists; pass --force to overwrite");

  const std::vector<SweepPoint> points = expand_sweep(cfg);
  std::vector<ResolvedRun> resolved;
  resolved.reserve(points.size());
  for (const auto& p : points) resolved.push_back(resolve(p.config, base_dir));

  fs::create_directories(out_dir);
  for (const auto& p : points) fs::create_directories(out_dir / p.name);

  const std::size_t jobs = points.size() * cfg.trials;
  std::vector<std::vector<TraceRow>> rows(jobs);
  std::vector<fs::path> files(jobs);
  parallel_for(jobs, cfg.workers, [&](std::size_t job) {
    const std::size_t point = job / cfg.trials;
    const std::uint64_t seed = trial_seed(cfg.seed, job % cfg.trials);
    RunTrace trace = run_trial(resolved[point], seed);
    files[job] = out_dir / points[point].name / (std::to_string(seed) + ".csv");
    std::ofstream os(files[job]);
    write_trace_csv(os, trace);
    if (!os) throw std::runtime_error("failed to write " + files[job].string());
    std::ofstream qs(out_dir / points[point].name / (std::to_string(seed) + ".q.json"));
    qs << qtable_to_json(trace.final_q).dump(2) << '\n';
    rows[job] = std::move(trace.rows);
  });

  ExperimentResult result;
  result.trace_files = files;
  std::ofstream bands(out_dir / "aggregate_bands.csv");
  bands << kBandsHeader << '\n';
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<std::vector<TraceRow>> group(std::make_move_iterator(rows.begin() + p * cfg.trials),
                                             std::make_move_iterator(rows.begin() + (p + 1) * cfg.trials));
    result.aggregate.push_back(aggregate_final(points[p].name, group));
    write_bands_csv(bands, points[p].name, aggregate_bands(group));
  }
  std::ofstream agg(out_dir / "aggregate.csv");
  write_aggregate_csv(agg, result.aggregate);
  return result;
}

}  // namespace rql
