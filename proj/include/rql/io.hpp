#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rql/mdp.hpp"
#include "rql/qlearning.hpp"
#include "rql/reward_model.hpp"

namespace rql {

using json = nlohmann::json;

/// Invalid or unreadable configuration; the message names the file position or field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json load_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + e.what());
  }
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_json_text(ss.str(), path);
}

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("field '" + where + key + "': missing");
  return j.at(key);
}

inline double number_at(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_number()) throw ConfigError("field '" + where + key + "': expected a number");
  return v.get<double>();
}

inline std::size_t count_at(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_number_unsigned() || v.get<std::size_t>() == 0)
    throw ConfigError("field '" + where + key + "': expected a positive integer");
  return v.get<std::size_t>();
}

}  // namespace detail

inline RewardModel reward_model_from_json(const json& j, const std::string& where = "") {
  using detail::number_at;
  if (j.is_number()) return RewardModel::deterministic(j.get<double>());
  if (!j.is_object()) throw ConfigError("field '" + where + "': expected a reward model object or number");
  const json& kind_field = detail::require(j, "kind", where + ".");
  if (!kind_field.is_string()) throw ConfigError("field '" + where + ".kind': expected a string");
  const std::string kind = kind_field.get<std::string>();
  const std::string at = where + ".";
  try {
    RewardModel model = [&] {
      if (kind == "deterministic") return RewardModel::deterministic(number_at(j, "value", at));
      if (kind == "uniform") return RewardModel::uniform(number_at(j, "lo", at), number_at(j, "hi", at));
      if (kind == "truncated-gaussian")
        return RewardModel::truncated_gaussian(number_at(j, "mean", at), number_at(j, "sd", at),
                                               number_at(j, "bound", at));
      if (kind == "bernoulli-scaled")
        return RewardModel::bernoulli_scaled(number_at(j, "p", at), number_at(j, "hi", at), number_at(j, "lo", at));
      if (kind == "lognormal") return RewardModel::lognormal(number_at(j, "mu", at), number_at(j, "sigma", at));
      if (kind == "pareto") return RewardModel::pareto(number_at(j, "scale", at), number_at(j, "shape", at));
      throw ConfigError("field '" + where + ".kind': unknown reward kind '" + kind + "'");
    }();
    if (j.contains("mean") && std::abs(number_at(j, "mean", at) - model.mean()) > 1e-9)
      throw ConfigError("field '" + where + ".mean': declared mean differs from the analytic mean " +
                        format_double(model.mean()));
    if (j.contains("variance_bound") && number_at(j, "variance_bound", at) < model.variance())
      throw ConfigError("field '" + where + ".variance_bound': below the analytic variance " +
                        format_double(model.variance()));
    if (j.contains("bound") && kind != "truncated-gaussian" && model.support_bound() > number_at(j, "bound", at))
      throw ConfigError("field '" + where + ".bound': support exceeds the declared bound");
    return model;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("field '" + where + "': " + e.what());
  }
}

inline json reward_model_to_json(const RewardModel& m) {
  const auto [a, b, c] = m.params();
  json j;
  j["kind"] = std::string(to_string(m.kind()));
  switch (m.kind()) {
    case RewardKind::deterministic: j["value"] = a; break;
    case RewardKind::uniform: j["lo"] = a; j["hi"] = b; break;
    case RewardKind::truncated_gaussian: j["mean"] = a; j["sd"] = b; j["bound"] = c; break;
    case RewardKind::bernoulli_scaled: j["p"] = a; j["hi"] = b; j["lo"] = c; break;
    case RewardKind::lognormal: j["mu"] = a; j["sigma"] = b; break;
    case RewardKind::pareto: j["scale"] = a; j["shape"] = b; break;
  }
  return j;
}

/**
 * MDP document:
 *   { "num_states": S, "num_actions": A, "gamma": g,
 *     "transitions": [S][A][S] probabilities,
 *     "rewards": [S][A] reward models (a bare number means deterministic) }
 */
inline TabularMdp mdp_from_json(const json& j) {
  const std::size_t S = detail::count_at(j, "num_states", "");
  const std::size_t A = detail::count_at(j, "num_actions", "");
  const double gamma = detail::number_at(j, "gamma", "");
  const json& P = detail::require(j, "transitions", "");
  const json& R = detail::require(j, "rewards", "");
  if (!P.is_array() || P.size() != S) throw ConfigError("field 'transitions': expected " + std::to_string(S) + " rows");
  if (!R.is_array() || R.size() != S) throw ConfigError("field 'rewards': expected " + std::to_string(S) + " rows");

  std::vector<double> transitions;
  transitions.reserve(S * A * S);
  std::vector<RewardModel> rewards;
  rewards.reserve(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    const std::string ps = "transitions[" + std::to_string(s) + "]";
    const std::string rs = "rewards[" + std::to_string(s) + "]";
    if (!P[s].is_array() || P[s].size() != A) throw ConfigError("field '" + ps + "': expected " + std::to_string(A) + " actions");
    if (!R[s].is_array() || R[s].size() != A) throw ConfigError("field '" + rs + "': expected " + std::to_string(A) + " actions");
    for (std::size_t a = 0; a < A; ++a) {
      const std::string pa = ps + "[" + std::to_string(a) + "]";
      const json& row = P[s][a];
      if (!row.is_array() || row.size() != S) throw ConfigError("field '" + pa + "': expected " + std::to_string(S) + " probabilities");
      double total = 0.0;
      for (std::size_t k = 0; k < S; ++k) {
        if (!row[k].is_number()) throw ConfigError("field '" + pa + "[" + std::to_string(k) + "]': expected a number");
        transitions.push_back(row[k].get<double>());
        total += transitions.back();
      }
      if (std::abs(total - 1.0) > TabularMdp::kRowTolerance)
        throw ConfigError("field '" + pa + "': transitions row (state " + std::to_string(s) + ", action " +
                          std::to_string(a) + ") sums to " + format_double(total));
      rewards.push_back(reward_model_from_json(R[s][a], rs + "[" + std::to_string(a) + "]"));
    }
  }
  try {
    return TabularMdp(S, A, std::move(transitions), std::move(rewards), gamma);
  } catch (const MdpError& e) {
    throw ConfigError(e.what());
  }
}

inline json mdp_to_json(const TabularMdp& mdp) {
  json j;
  j["num_states"] = mdp.num_states();
  j["num_actions"] = mdp.num_actions();
  j["gamma"] = mdp.discount();
  json P = json::array();
  json R = json::array();
  for (State s = 0; s < mdp.num_states(); ++s) {
    json prow = json::array();
    json rrow = json::array();
    for (Action a = 0; a < mdp.num_actions(); ++a) {
      const auto row = mdp.transition_row(s, a);
      prow.push_back(std::vector<double>(row.begin(), row.end()));
      rrow.push_back(reward_model_to_json(mdp.reward(s, a)));
    }
    P.push_back(std::move(prow));
    R.push_back(std::move(rrow));
  }
  j["transitions"] = std::move(P);
  j["rewards"] = std::move(R);
  return j;
}

/// { "num_states": S, "num_actions": A, "values": [S][A] } with values[s][a] = Q(s,a).
inline json qtable_to_json(const QTable& q) {
  json values = json::array();
  for (State s = 0; s < q.num_states(); ++s) {
    const auto row = q.row(s);
    values.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"num_states", q.num_states()}, {"num_actions", q.num_actions()}, {"values", std::move(values)}};
}

inline QTable qtable_from_json(const json& j) {
  const std::size_t S = detail::count_at(j, "num_states", "");
  const std::size_t A = detail::count_at(j, "num_actions", "");
  const json& values = detail::require(j, "values", "");
  if (!values.is_array() || values.size() != S) throw ConfigError("field 'values': expected " + std::to_string(S) + " rows");
  QTable q(S, A);
  for (State s = 0; s < S; ++s) {
    if (!values[s].is_array() || values[s].size() != A)
      throw ConfigError("field 'values[" + std::to_string(s) + "]': expected " + std::to_string(A) + " entries");
    for (Action a = 0; a < A; ++a) q(s, a) = values[s][a].get<double>();
  }
  return q;
}

inline constexpr const char* kTraceHeader = "t,d_t,clamps,corrupted,max_abs_q";

inline void write_trace_csv(std::ostream& os, const RunTrace& trace) {
  os << kTraceHeader << '\n';
  for (const TraceRow& r : trace.rows) {
    os << r.t << ',' << format_double(r.error) << ',' << r.clamps << ',' << (r.corrupted ? 1 : 0) << ','
       << format_double(r.max_abs_q) << '\n';
  }
}

inline std::vector<TraceRow> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceHeader) throw ConfigError("trace CSV: unexpected header");
  std::vector<TraceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    TraceRow r;
    int corrupted = 0;
    unsigned long long t = 0;
    unsigned long long clamps = 0;
    if (std::sscanf(line.c_str(), "%llu,%lf,%llu,%d,%lf", &t, &r.error, &clamps, &corrupted, &r.max_abs_q) != 5)
      throw ConfigError("trace CSV line " + std::to_string(lineno) + ": malformed row");
    r.t = t;
    r.clamps = clamps;
    r.corrupted = corrupted != 0;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace rql
