#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rql/mdp.hpp"
#include "rql/random.hpp"
#include "rql/reward_model.hpp"

namespace testing_support {

/// Raw arrays alongside the library object, so oracles never read back through the library.
struct RandomMdp {
  std::size_t S = 0;
  std::size_t A = 0;
  double gamma = 0.0;
  std::vector<double> P;  ///< [s][a][s']
  std::vector<double> R;  ///< [s][a], deterministic rewards
  rql::TabularMdp mdp;
};

inline RandomMdp random_mdp(rql::RandomStream& rng, std::size_t S, std::size_t A, double gamma,
                            double reward_range = 1.0, double sparsity = 0.3) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> P(S * A * S, 0.0);
  std::vector<double> R(S * A, 0.0);
  for (std::size_t i = 0; i < S * A; ++i) {
    double total = 0.0;
    for (std::size_t n = 0; n < S; ++n) {
      const double w = unit(rng) < sparsity ? 0.0 : unit(rng);
      P[i * S + n] = w;
      total += w;
    }
    if (total == 0.0) {
      P[i * S + (i % S)] = 1.0;
      total = 1.0;
    }
    for (std::size_t n = 0; n < S; ++n) P[i * S + n] /= total;
    R[i] = reward_range * (2.0 * unit(rng) - 1.0);
  }
  std::vector<rql::RewardModel> models;
  for (double r : R) models.push_back(rql::RewardModel::deterministic(r));
  rql::TabularMdp mdp(S, A, P, models, gamma);
  // Rows were renormalised by the library; keep the oracle arrays identical to what it stores.
  P.assign(mdp.transitions().begin(), mdp.transitions().end());
  return {S, A, gamma, std::move(P), std::move(R), std::move(mdp)};
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("rql_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
