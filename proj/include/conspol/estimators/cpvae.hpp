#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "conspol/common.hpp"
#include "conspol/data/dataset.hpp"
#include "conspol/policy/propensity.hpp"
#include "conspol/pvae/set_vae.hpp"

namespace conspol {

struct RewardPrediction {
  double mean = 0.0;
  double sigma = 0.0;
};

enum class PredictMode { Point, MonteCarlo };

/// Conditional PVAE: encoder sees the features plus a reward
/// pseudo-attribute (last attribute) and a one-hot action; the decoder
/// reconstructs features and reward given z and the action.
class CpvaeModel {
 public:
  CpvaeModel() = default;
  CpvaeModel(FeatureSchema schema, std::size_t num_actions, double reward_mean, double reward_std,
             const NetworkDims& dims, Rng& rng);
  CpvaeModel(FeatureSchema schema, std::size_t num_actions, SetVae network);

  const FeatureSchema& schema() const { return schema_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t reward_index() const { return schema_.size(); }
  const SetVae& network() const { return network_; }
  SetVae& network() { return network_; }

  /// Training sample for (x~, a, r); the reward is observed and scored.
  SetVae::TrainingSample training_sample(const PartialFeature& xt, std::size_t a, double reward,
                                         double weight) const;

  /// Aggregated set code of x~ with the reward missing (shared by all actions).
  Vector aggregate(const PartialFeature& xt) const;
  PosteriorGaussian encode(const PartialFeature& xt, std::size_t a) const;

  /// Reward head at (x~, a, reward missing), de-standardized. Point decodes
  /// at the posterior mean; MonteCarlo averages over `draws` latent samples
  /// (sigma then includes the spread of the means).
  RewardPrediction predict_reward(const PartialFeature& xt, std::size_t a, PredictMode mode = PredictMode::Point,
                                  std::size_t draws = 1, Rng* rng = nullptr) const;
  /// Point predictions for every action, encoding x~ once.
  std::vector<RewardPrediction> predict_rewards(const PartialFeature& xt) const;

  /// t completions of x~ drawn from the model conditioned on action a;
  /// continuous values are decoded means unless decoder_noise is set.
  std::vector<Feature> sample_posterior_features(const PartialFeature& xt, std::size_t a, std::size_t t,
                                                 Rng& rng, bool decoder_noise = false) const;

  friend bool operator==(const CpvaeModel&, const CpvaeModel&) = default;

 private:
  Vector one_hot(std::size_t a) const;
  RewardPrediction reward_from_heads(const HeadParams& heads) const;

  FeatureSchema schema_;
  std::size_t num_actions_ = 0;
  SetVae network_;
};

void to_json(nlohmann::json& j, const CpvaeModel& m);
void from_json(const nlohmann::json& j, CpvaeModel& m);

struct CpvaeConfig {
  NetworkDims dims;
  OptimizerConfig optimizer;
  double reward_dropout = 0.25;
  double max_ips_weight = 100.0;
  bool use_ips = true;
};

void to_json(nlohmann::json& j, const CpvaeConfig& c);
void from_json(const nlohmann::json& j, CpvaeConfig& c);

struct CpvaeTrainResult {
  CpvaeModel model;
  std::vector<double> loss_trace;  // mean weighted loss: initial, then per epoch
};

/// IPS-weighted training; logged_propensity[i] = pi^_0(a_i | x~_i).
CpvaeTrainResult train_cpvae(const LoggedDataset& data, std::span<const double> logged_propensity,
                             const CpvaeConfig& config);
/// Same, with propensities from a fitted model (averaged over imputations).
CpvaeTrainResult train_cpvae(const LoggedDataset& data, const PropensityModel& propensity, const PvaeModel& pvae,
                             const CpvaeConfig& config, std::size_t threads = 1);

}  // namespace conspol
