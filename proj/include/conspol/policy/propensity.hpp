#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "conspol/common.hpp"
#include "conspol/data/dataset.hpp"
#include "conspol/nn/matrix.hpp"
#include "conspol/pvae/pvae.hpp"

namespace conspol {

struct PropensityConfig {
  std::size_t imputations = 5;  // m
  std::size_t epochs = 500;     // full-batch Adam steps per regression
  double learning_rate = 0.05;
  double clip = 0.01;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

void to_json(nlohmann::json& j, const PropensityConfig& c);
void from_json(const nlohmann::json& j, PropensityConfig& c);

/// Design vector of a complete feature: standardized continuous values,
/// one-hot categorical values, trailing bias 1.
Vector propensity_design(const FeatureSchema& schema, std::span<const double> x);
std::size_t propensity_design_width(const FeatureSchema& schema);

/// Multinomial logistic regression fitted on m imputed copies of the data.
struct PropensityModel {
  FeatureSchema schema;
  std::size_t num_actions = 0;
  double clip = 0.01;
  std::vector<nn::Matrix> weights;  // one (actions x design width) matrix per imputation

  /// Softmax probabilities of sub-model k at a complete feature.
  Vector sub_model_probs(std::size_t k, std::span<const double> x) const;
  /// Average over sub-models, clip each entry at `clip`, renormalize.
  Vector probs(std::span<const double> x) const;

  friend bool operator==(const PropensityModel&, const PropensityModel&) = default;
};

void to_json(nlohmann::json& j, const PropensityModel& m);
void from_json(const nlohmann::json& j, PropensityModel& m);

/// Fits one softmax regression per imputed dataset. Missing attributes are
/// filled with a single posterior draw each time. Throws DataError naming
/// an action that never occurs in the log.
PropensityModel fit_propensity(const LoggedDataset& data, const PvaeModel& pvae, const PropensityConfig& config);

/// Softmax regression on complete features (the single-imputation building block).
nn::Matrix fit_softmax_regression(const FeatureSchema& schema, std::span<const Feature> features,
                                  std::span<const std::size_t> actions, std::size_t num_actions,
                                  std::size_t epochs, double learning_rate);

/// pi^_0(. | x~): impute x~ in Mean mode, then average the sub-models.
Vector estimate_propensity(const PropensityModel& model, const PvaeModel& pvae, const PartialFeature& xt);

/// pi^_0(a_i | x~_i) for every logged row.
Vector logged_propensities(const PropensityModel& model, const PvaeModel& pvae, const LoggedDataset& data,
                           std::size_t threads = 1);

/// Clips entries below `clip` up to it and renormalizes.
Vector clip_and_normalize(Vector p, double clip);

}  // namespace conspol
