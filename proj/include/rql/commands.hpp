#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rql/bellman.hpp"
#include "rql/experiment.hpp"
#include "rql/fig1.hpp"
#include "rql/io.hpp"
#include "rql/stats.hpp"

namespace rql {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfigError = 2 };

/// Command-line overrides shared by all subcommands.
struct CommandOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<std::string> out;
  bool force = false;
  std::optional<std::size_t> workers;
  Fig1Spec fig1;  ///< `solve` without --config
};

struct LoadedConfig {
  ExperimentConfig config;
  std::filesystem::path base_dir = ".";
};

inline LoadedConfig load_experiment(const std::string& path) {
  LoadedConfig loaded;
  loaded.config = experiment_config_from_json(load_json_file(path));
  loaded.base_dir = std::filesystem::path(path).parent_path();
  if (loaded.base_dir.empty()) loaded.base_dir = ".";
  return loaded;
}

inline void apply_overrides(ExperimentConfig& cfg, const CommandOptions& opt) {
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.trials) {
    if (*opt.trials == 0) throw ConfigError("--trials must be at least 1");
    cfg.trials = *opt.trials;
  }
  if (opt.out) cfg.out = *opt.out;
  if (opt.workers) cfg.workers = std::max<std::size_t>(1, *opt.workers);
}

namespace detail {

inline std::string fixed(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline void print_table(std::ostream& os, const QTable& q, const std::string& label) {
  const Policy policy = greedy_policy(q);
  os << label << '\n';
  for (State s = 0; s < q.num_states(); ++s) {
    os << "  state " << s << ':';
    for (Action a = 0; a < q.num_actions(); ++a) os << ' ' << fixed(q(s, a), 8);
    os << "   greedy " << policy(s) << '\n';
  }
}

inline const char* fig1_action_name(Action a) { return a == fig1::kLeft ? "L" : "R"; }

}  // namespace detail

// ---------------------------------------------------------------------------
// solve

inline int cmd_solve(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    std::optional<TabularMdp> mdp;
    std::optional<Fig1Spec> fig1_spec;
    std::optional<double> attack_eps;
    if (opt.config) {
      const json doc = load_json_file(*opt.config);
      if (doc.is_object() && doc.contains("num_states")) {
        mdp = mdp_from_json(doc);
      } else {
        const LoadedConfig loaded = load_experiment(*opt.config);
        attack_eps = loaded.config.attack.epsilon;
        if (loaded.config.mdp.fig1) fig1_spec = loaded.config.mdp.fig1;
        mdp = resolve_mdp(loaded.config.mdp, attack_eps, loaded.base_dir).mdp;
      }
    } else {
      fig1_spec = opt.fig1;
      mdp = resolve_mdp(MdpSpec{opt.fig1, std::nullopt, std::nullopt}, std::nullopt, ".").mdp;
    }

    const ValueIterationReport report = value_iteration(*mdp, 1e-10);
    detail::print_table(out, report.q, "Q*:");
    out << "residual " << format_double(report.residual) << " after " << report.iterations << " iterations\n";

    if (fig1_spec) {
      const double eps = fig1_spec->epsilon.value_or(attack_eps.value_or(0.0));
      fig1::Params params{fig1_spec->p, fig1_spec->d, fig1_spec->kappa, eps, fig1_spec->gamma};
      out << "gap 2d+kappa = " << detail::fixed(params.gap(), 6) << '\n';
      out << "policy(start) clean: " << detail::fig1_action_name(greedy_policy(report.q)(fig1::kStart)) << '\n';
      if (eps > 0.0) {
        params.validate();
        const auto means = fig1::huber_mixture_means(*mdp, fig1::huber_corruption(params.corruption_signal()), eps);
        const QTable q_tilde = solve_q_star(perturbed_mdp(*mdp, means), 1e-10);
        out << "corruption signal C = " << detail::fixed(params.corruption_signal(), 6) << '\n';
        out << "policy(start) attacked: " << detail::fig1_action_name(greedy_policy(q_tilde)(fig1::kStart)) << '\n';
        out << "||Q~* - Q*||_inf = " << detail::fixed(linf_distance(q_tilde, report.q), 10) << '\n';
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

// ---------------------------------------------------------------------------
// run

inline int cmd_run(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    if (!opt.config) throw ConfigError("run: --config is required");
    LoadedConfig loaded = load_experiment(*opt.config);
    apply_overrides(loaded.config, opt);
    const ExperimentResult result =
        run_experiment(loaded.config, std::filesystem::path(loaded.config.out), opt.force, loaded.base_dir);
    out << "wrote " << result.trace_files.size() << " traces to " << loaded.config.out << '\n';
    out << "sweep_point  trials  mean  median  p10  p90\n";
    for (const auto& row : result.aggregate) {
      out << row.sweep_point << "  " << row.trials << "  " << detail::fixed(row.final_error.mean) << "  "
          << detail::fixed(row.final_error.median) << "  " << detail::fixed(row.final_error.p10) << "  "
          << detail::fixed(row.final_error.p90) << '\n';
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

// ---------------------------------------------------------------------------
// attack-demo

struct AttackDemoSettings {
  Fig1Spec fig1;
  double epsilon = 0.1;
  std::size_t vanilla_horizon = 50000;
  std::size_t robust_horizon = 20000;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct DemoCheck {
  std::string name;
  double value = 0.0;
  std::string requirement;
  bool pass = false;
};

struct AttackDemoResult {
  double gap = 0.0;
  Summary vanilla_vs_tilde;
  Summary vanilla_vs_star;
  Summary robust_vs_star;
  Summary robust_vs_tilde;
  std::vector<double> vanilla_star_finals;
  std::vector<double> robust_star_finals;
  std::vector<DemoCheck> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

inline AttackDemoSettings attack_demo_settings(const ExperimentConfig& cfg) {
  AttackDemoSettings s;
  if (cfg.mdp.fig1) s.fig1 = *cfg.mdp.fig1;
  else throw ConfigError("attack-demo: mdp must be the 'fig1' counterexample");
  s.epsilon = cfg.attack.epsilon.value_or(s.fig1.epsilon.value_or(s.epsilon));
  s.trials = cfg.trials;
  s.seed = cfg.seed;
  s.workers = cfg.workers;
  return s;
}

/**
 * Vanilla (Robbins-Monro) and robust learners on the counterexample under its Huber
 * attack, each measured against both Q* and the attacked fixed point Q~*. With
 * epsilon = 0 there is no attack and both references coincide.
 */
inline AttackDemoResult attack_demo(const AttackDemoSettings& s) {
  ExperimentConfig base;
  base.mdp.fig1 = s.fig1;
  base.mdp.fig1->epsilon.reset();
  base.attack.strategy = s.epsilon > 0.0 ? "huber" : "none";
  base.attack.epsilon = s.epsilon;

  const auto resolved = [&](const std::string& kind, std::size_t horizon, const std::string& reference) {
    ExperimentConfig c = base;
    c.learner.kind = kind;
    c.learner.horizon = horizon;
    c.learner.reference = reference;
    return resolve(c);
  };

  AttackDemoResult r;
  r.gap = 2.0 * s.fig1.d + s.fig1.kappa;
  const ResolvedRun vanilla_star = resolved("vanilla", s.vanilla_horizon, "q_star");
  const ResolvedRun vanilla_tilde = resolved("vanilla", s.vanilla_horizon, "q_tilde");
  const ResolvedRun robust_star = resolved("robust", s.robust_horizon, "q_star");
  const ResolvedRun robust_tilde = resolved("robust", s.robust_horizon, "q_tilde");

  // One run per seed and learner; both references are read off the same final table.
  std::vector<QTable> vanilla_final(s.trials, QTable(1, 1));
  std::vector<QTable> robust_final(s.trials, QTable(1, 1));
  parallel_for(2 * s.trials, s.workers, [&](std::size_t job) {
    const std::size_t k = job % s.trials;
    if (job < s.trials) vanilla_final[k] = run_trial(vanilla_star, trial_seed(s.seed, k)).final_q;
    else robust_final[k] = run_trial(robust_star, trial_seed(s.seed, k)).final_q;
  });

  std::vector<double> vt, vs, rs, rt;
  for (std::size_t k = 0; k < s.trials; ++k) {
    vs.push_back(linf_distance(vanilla_final[k], vanilla_star.reference));
    vt.push_back(linf_distance(vanilla_final[k], vanilla_tilde.reference));
    rs.push_back(linf_distance(robust_final[k], robust_star.reference));
    rt.push_back(linf_distance(robust_final[k], robust_tilde.reference));
  }
  r.vanilla_vs_star = summarize(vs);
  r.vanilla_vs_tilde = summarize(vt);
  r.robust_vs_star = summarize(rs);
  r.robust_vs_tilde = summarize(rt);
  r.vanilla_star_finals = vs;
  r.robust_star_finals = rs;

  const double tilde_tol = 0.1 * r.gap;
  if (s.epsilon > 0.0) {
    const double tol = std::max(0.5, 0.1 * r.gap);
    r.checks.push_back({"vanilla median ||Q_T - Q~*||", r.vanilla_vs_tilde.median, "<= " + detail::fixed(tilde_tol, 3),
                        r.vanilla_vs_tilde.median <= tilde_tol});
    r.checks.push_back({"vanilla median ||Q_T - Q*||", r.vanilla_vs_star.median,
                        "within " + detail::fixed(tol, 3) + " of gap " + detail::fixed(r.gap, 3),
                        std::abs(r.vanilla_vs_star.median - r.gap) <= tol});
    r.checks.push_back({"robust median ||Q_T - Q*||", r.robust_vs_star.median, "<= 1.0",
                        r.robust_vs_star.median <= 1.0});
    r.checks.push_back({"robust / vanilla median error vs Q*", r.robust_vs_star.median / r.vanilla_vs_star.median,
                        "<= 1/3", 3.0 * r.robust_vs_star.median <= r.vanilla_vs_star.median});
  } else {
    r.checks.push_back({"vanilla median ||Q_T - Q*||", r.vanilla_vs_star.median, "<= " + detail::fixed(tilde_tol, 3),
                        r.vanilla_vs_star.median <= tilde_tol});
    r.checks.push_back({"robust median ||Q_T - Q*||", r.robust_vs_star.median, "<= 1.0",
                        r.robust_vs_star.median <= 1.0});
  }
  return r;
}

inline void print_attack_demo(std::ostream& out, const AttackDemoSettings& s, const AttackDemoResult& r) {
  out << "counterexample p=" << s.fig1.p << " d=" << s.fig1.d << " kappa=" << s.fig1.kappa << " gamma=" << s.fig1.gamma
      << " epsilon=" << s.epsilon << "  gap=" << detail::fixed(r.gap, 4) << '\n';
  out << "vanilla T=" << s.vanilla_horizon << ", robust T=" << s.robust_horizon << ", seeds " << s.seed << ".."
      << s.seed + s.trials - 1 << '\n';
  out << "learner  reference  median  p10  p90\n";
  const auto line = [&](const char* learner, const char* ref, const Summary& x) {
    out << learner << "  " << ref << "  " << detail::fixed(x.median, 4) << "  " << detail::fixed(x.p10, 4) << "  "
        << detail::fixed(x.p90, 4) << '\n';
  };
  line("vanilla", "Q*", r.vanilla_vs_star);
  line("vanilla", "Q~*", r.vanilla_vs_tilde);
  line("robust", "Q*", r.robust_vs_star);
  line("robust", "Q~*", r.robust_vs_tilde);
  for (const auto& c : r.checks)
    out << (c.pass ? "PASS  " : "FAIL  ") << c.name << " = " << detail::fixed(c.value, 4) << "  (" << c.requirement
        << ")\n";
}

inline int cmd_attack_demo(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    AttackDemoSettings s;
    if (opt.config) {
      LoadedConfig loaded = load_experiment(*opt.config);
      apply_overrides(loaded.config, opt);
      s = attack_demo_settings(loaded.config);
    } else {
      if (opt.seed) s.seed = *opt.seed;
      if (opt.trials) s.trials = *opt.trials;
      if (opt.workers) s.workers = *opt.workers;
    }
    if (s.trials == 0) throw ConfigError("attack-demo: need at least one trial");
    const AttackDemoResult r = attack_demo(s);
    print_attack_demo(out, s, r);
    return r.passed() ? kExitOk : kExitCheckFailed;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

// ---------------------------------------------------------------------------
// rate-check

inline constexpr std::size_t kMinRateCheckSeeds = 10;

struct RateCheckResult {
  std::vector<std::size_t> horizons;
  std::vector<double> mean_final;  ///< mean over seeds of d_T at each horizon
  LineFit fit;                     ///< log mean d_T against log T over the upper part of the grid
  std::size_t fit_points = 0;
  std::vector<double> plateau_epsilons;
  std::vector<double> plateau_levels;

  bool plateaus_increasing() const {
    for (std::size_t i = 1; i < plateau_levels.size(); ++i)
      if (!(plateau_levels[i] > plateau_levels[i - 1])) return false;
    return true;
  }
};

/// Geometric grid of `points` horizons from fraction * T up to T, rounded and deduplicated.
inline std::vector<std::size_t> horizon_grid(std::size_t horizon, std::size_t points, double min_fraction) {
  if (points < 2) throw ConfigError("rate_check.grid_points: need at least 2 horizons");
  if (!(min_fraction > 0.0 && min_fraction < 1.0))
    throw ConfigError("rate_check.min_horizon_fraction: must lie in (0, 1)");
  std::vector<std::size_t> grid;
  const double lo = std::log(min_fraction * static_cast<double>(horizon));
  const double hi = std::log(static_cast<double>(horizon));
  for (std::size_t k = 0; k < points; ++k) {
    const double v = std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1));
    const auto T = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(v)));
    if (grid.empty() || T > grid.back()) grid.push_back(T);
  }
  grid.back() = horizon;
  return grid;
}

/**
 * Clean robust runs across a horizon grid: final d_T (seed-averaged) against T on
 * log-log axes. Then, for each plateau epsilon, attacked robust runs at the full
 * horizon and the seed-averaged mean of d_t over the trailing plateau fraction.
 */
inline RateCheckResult rate_check(const ExperimentConfig& cfg, const std::filesystem::path& base_dir = ".") {
  if (cfg.trials < kMinRateCheckSeeds)
    throw ConfigError("rate-check: needs at least " + std::to_string(kMinRateCheckSeeds) + " seeds, got " +
                      std::to_string(cfg.trials));
  if (cfg.learner.kind != "robust") throw ConfigError("rate-check: learner.kind must be 'robust'");
  const RateCheckSpec& rc = cfg.rate_check;

  RateCheckResult r;
  r.horizons = horizon_grid(cfg.learner.horizon, rc.grid_points, rc.min_horizon_fraction);

  ExperimentConfig clean = cfg;
  clean.attack = AttackSpec{};
  clean.attack.epsilon = 0.0;
  clean.learner.epsilon = 0.0;
  if (clean.mdp.fig1) clean.mdp.fig1->epsilon.reset();
  std::vector<ResolvedRun> runs;
  for (std::size_t T : r.horizons) {
    clean.learner.horizon = T;
    runs.push_back(resolve(clean, base_dir));
  }
  std::vector<double> finals(r.horizons.size() * cfg.trials);
  parallel_for(finals.size(), cfg.workers, [&](std::size_t job) {
    const std::size_t h = job / cfg.trials;
    finals[job] = run_trial(runs[h], trial_seed(cfg.seed, job % cfg.trials)).final_error();
  });
  for (std::size_t h = 0; h < r.horizons.size(); ++h)
    r.mean_final.push_back(mean_of(std::span<const double>(finals).subspan(h * cfg.trials, cfg.trials)));

  const auto n = r.horizons.size();
  r.fit_points = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(rc.fit_upper_fraction * static_cast<double>(n))));
  r.fit_points = std::min(r.fit_points, n);
  std::vector<double> x, y;
  for (std::size_t h = n - r.fit_points; h < n; ++h) {
    x.push_back(static_cast<double>(r.horizons[h]));
    y.push_back(r.mean_final[h]);
  }
  r.fit = fit_loglog(x, y);

  if (!rc.plateau_epsilons.empty()) {
    std::vector<ResolvedRun> attacked;
    for (double eps : rc.plateau_epsilons) {
      ExperimentConfig c = cfg;
      if (rc.plateau_mdp) c.mdp = *rc.plateau_mdp;
      if (c.mdp.fig1) c.mdp.fig1->epsilon.reset();
      c.attack = rc.plateau_attack;
      c.attack.epsilon = eps;
      c.learner.epsilon = eps;
      c.learner.reference = "q_star";
      if (rc.plateau_reward_scale) c.learner.reward_scale = *rc.plateau_reward_scale;
      attacked.push_back(resolve(c, base_dir));
    }
    std::vector<double> levels(attacked.size() * cfg.trials);
    parallel_for(levels.size(), cfg.workers, [&](std::size_t job) {
      const std::size_t e = job / cfg.trials;
      const RunTrace trace = run_trial(attacked[e], trial_seed(cfg.seed, job % cfg.trials));
      levels[job] = plateau_level(trace.rows, rc.plateau_fraction);
    });
    r.plateau_epsilons = rc.plateau_epsilons;
    for (std::size_t e = 0; e < attacked.size(); ++e)
      r.plateau_levels.push_back(mean_of(std::span<const double>(levels).subspan(e * cfg.trials, cfg.trials)));
  }
  return r;
}

inline void print_rate_check(std::ostream& out, const RateCheckResult& r) {
  out << "horizon  mean_final_d_T\n";
  for (std::size_t h = 0; h < r.horizons.size(); ++h)
    out << r.horizons[h] << "  " << detail::fixed(r.mean_final[h], 6) << '\n';
  out << "log-log slope " << detail::fixed(r.fit.slope, 4) << " (intercept " << detail::fixed(r.fit.intercept, 4)
      << ", R^2 " << detail::fixed(r.fit.r_squared, 4) << ", last " << r.fit_points << " horizons)\n";
  if (r.plateau_levels.empty()) return;
  out << "epsilon  plateau  ratio_to_previous\n";
  for (std::size_t e = 0; e < r.plateau_levels.size(); ++e) {
    out << r.plateau_epsilons[e] << "  " << detail::fixed(r.plateau_levels[e], 6) << "  ";
    if (e == 0) out << "-";
    else out << detail::fixed(r.plateau_levels[e] / r.plateau_levels[e - 1], 3);
    out << '\n';
  }
  out << "plateaus increasing in epsilon: " << (r.plateaus_increasing() ? "yes" : "no") << '\n';
}

inline int cmd_rate_check(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    if (!opt.config) throw ConfigError("rate-check: --config is required");
    LoadedConfig loaded = load_experiment(*opt.config);
    apply_overrides(loaded.config, opt);
    const RateCheckResult r = rate_check(loaded.config, loaded.base_dir);
    print_rate_check(out, r);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

}  // namespace rql
