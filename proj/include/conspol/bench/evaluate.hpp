#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "conspol/bench/environment.hpp"
#include "conspol/common.hpp"
#include "conspol/data/dataset.hpp"

namespace conspol {

/// Returns one action per evaluated policy for a masked test feature.
/// Called concurrently; must be thread-safe. `rng` is private to the instance.
using MultiRecommender = std::function<std::vector<std::size_t>(const PartialFeature& xt, Rng& rng)>;

struct EvalOptions {
  std::size_t n_test = 1000;
  double tail_threshold = -7.0;
  std::vector<std::uint64_t> seeds{0};
  std::size_t threads = 1;
  bool keep_instances = true;
};

/// One test instance under one policy.
struct InstanceOutcome {
  std::uint64_t seed = 0;
  std::size_t index = 0;
  std::size_t action = 0;
  double expected_reward = 0.0;  // E[R | x, action] from the environment
  double reward = 0.0;           // realized draw
  int label = -1;
};

struct SeedMetrics {
  std::uint64_t seed = 0;
  double avg_reward = 0.0;  // mean expected reward of the chosen actions
  std::size_t tail_count = 0;  // realized rewards below the threshold
  double tail_fraction = 0.0;
  std::size_t n_test = 0;
};

struct PolicyReport {
  std::string name;
  std::vector<SeedMetrics> seeds;
  double avg_reward = 0.0;  // mean over seeds
  double se = 0.0;          // standard error of the mean expected reward over all test instances
  double tail_fraction = 0.0;
  double tail_count = 0.0;
  std::size_t n_test = 0;
  std::vector<InstanceOutcome> instances;
};

/// Draws fresh test instances per seed (instance i uses seed mix(seed, i)),
/// masks them at the environment's erase rate, applies the recommender and
/// scores every policy on the same instances. Results do not depend on the
/// thread count.
std::vector<PolicyReport> evaluate_policies(const Environment& env, const std::vector<std::string>& names,
                                            const MultiRecommender& recommend, const EvalOptions& options);

struct AteResult {
  double tau_hat = 0.0;
  double tau_true = 0.0;  // in-sample mean of R(1) - R(0)
  double delta = 0.0;     // |tau_hat - tau_true|
};

/// theta(i, x~_i, a) is the estimated expected reward of action a for row i.
using ThetaFunction = std::function<double(std::size_t, const PartialFeature&, std::size_t)>;

/// tau_hat = mean_i theta(i, 1) - theta(i, 0) against the retained
/// counterfactuals (realized potential outcomes when available, otherwise
/// the reward means). Requires two actions and ground truth.
AteResult estimate_ate(const LoggedDataset& data, const ThetaFunction& theta, std::size_t threads = 1);

}  // namespace conspol
