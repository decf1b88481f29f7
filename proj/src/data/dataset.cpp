#include "conspol/data/dataset.hpp"

#include <cmath>
#include <string>

namespace conspol {

void LoggedDataset::validate() const {
  const std::size_t n = features.size();
  if (actions.size() != n || rewards.size() != n) {
    throw DataError("dataset columns disagree: " + std::to_string(n) + " features, " +
                    std::to_string(actions.size()) + " actions, " + std::to_string(rewards.size()) + " rewards");
  }
  if (num_actions == 0) throw DataError("dataset has no actions");
  for (std::size_t i = 0; i < n; ++i) {
    try {
      validate_feature(schema, features[i]);
    } catch (const ShapeError& e) {
      throw DataError("row " + std::to_string(i) + ": " + e.what());
    }
    if (actions[i] >= num_actions) {
      throw DataError("row " + std::to_string(i) + ": action " + std::to_string(actions[i]) + " >= " +
                      std::to_string(num_actions));
    }
    if (!std::isfinite(rewards[i])) throw DataError("row " + std::to_string(i) + ": reward is not finite");
  }
  if (truth) {
    if (truth->complete.size() != n || truth->reward_means.rows() != n || truth->logging.rows() != n ||
        truth->reward_means.cols() != num_actions || truth->logging.cols() != num_actions) {
      throw DataError("ground truth does not align with the logged rows");
    }
  }
}

Vector true_logged_propensities(const LoggedDataset& data) {
  if (!data.truth) throw DataError("dataset has no ground-truth logging policy");
  Vector p(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) p[i] = data.truth->logging(i, data.actions[i]);
  return p;
}

}  // namespace conspol
