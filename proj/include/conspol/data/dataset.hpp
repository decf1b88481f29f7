#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "conspol/common.hpp"
#include "conspol/nn/matrix.hpp"
#include "conspol/pvae/feature.hpp"

namespace conspol {

/// Quantities only a simulator knows. Rows align with the logged rows.
struct GroundTruth {
  std::vector<Feature> complete;
  std::vector<int> labels;        // latent class per row (-1 when the family has none)
  nn::Matrix reward_means;        // rows x actions: E[R | x, a]
  nn::Matrix logging;             // rows x actions: pi_0(a | x)
  nn::Matrix potential_outcomes;  // rows x actions, realized draws; may be empty

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Logged bandit data (x~_i, a_i, r_i).
struct LoggedDataset {
  FeatureSchema schema;
  std::vector<PartialFeature> features;
  std::vector<std::size_t> actions;
  Vector rewards;
  std::size_t num_actions = 0;
  std::optional<GroundTruth> truth;

  std::size_t size() const { return features.size(); }

  /// Throws DataError describing the first inconsistency.
  void validate() const;

  friend bool operator==(const LoggedDataset&, const LoggedDataset&) = default;
};

/// Logged-action propensities pi_0(a_i | x_i) from the ground truth.
Vector true_logged_propensities(const LoggedDataset& data);

}  // namespace conspol
