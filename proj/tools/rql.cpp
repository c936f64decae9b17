#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rql/commands.hpp"

namespace {

template <typename T>
void bind_optional(CLI::App& app, const std::string& flag, std::optional<T>& target, const std::string& help) {
  app.add_option_function<T>(flag, [&target](const T& v) { target = v; }, help);
}

void add_common_options(CLI::App& cmd, rql::CommandOptions& opt) {
  bind_optional(cmd, "--config", opt.config, "experiment config (JSON)");
  bind_optional(cmd, "--seed", opt.seed, "base seed; trial k uses seed + k");
  bind_optional(cmd, "--trials", opt.trials, "number of seeds");
  bind_optional(cmd, "--out", opt.out, "output directory");
  bind_optional(cmd, "--workers", opt.workers, "parallel runs");
  cmd.add_flag("--force", opt.force, "overwrite an existing output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust synchronous Q-learning under reward corruption"};
  app.require_subcommand(1);

  rql::CommandOptions opt;
  std::optional<double> epsilon;

  auto* solve = app.add_subcommand("solve", "value iteration on an MDP; counterexample gap and policies");
  add_common_options(*solve, opt);
  solve->add_option("--p", opt.fig1.p, "counterexample: transition probability p");
  solve->add_option("--d", opt.fig1.d, "counterexample: reward offset d");
  solve->add_option("--kappa", opt.fig1.kappa, "counterexample: gap excess kappa");
  solve->add_option("--gamma", opt.fig1.gamma, "counterexample: discount");
  bind_optional(*solve, "--epsilon", epsilon, "counterexample: corruption fraction");

  auto* run = app.add_subcommand("run", "run an experiment config: per-seed traces and aggregates");
  add_common_options(*run, opt);

  auto* demo = app.add_subcommand("attack-demo", "vanilla vs robust learner on the counterexample under attack");
  add_common_options(*demo, opt);

  auto* rate = app.add_subcommand("rate-check", "log-log rate fit and epsilon plateaus of the robust learner");
  add_common_options(*rate, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rql::kExitOk : rql::kExitConfigError;
  }
  opt.fig1.epsilon = epsilon;

  try {
    if (solve->parsed()) return rql::cmd_solve(opt, std::cout, std::cerr);
    if (run->parsed()) return rql::cmd_run(opt, std::cout, std::cerr);
    if (demo->parsed()) return rql::cmd_attack_demo(opt, std::cout, std::cerr);
    if (rate->parsed()) return rql::cmd_rate_check(opt, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rql::kExitConfigError;
  }
  return rql::kExitConfigError;
}
