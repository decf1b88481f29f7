#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "conspol/bench/environment.hpp"
#include "conspol/nn/matrix.hpp"

namespace conspol {

/// Piecewise glucose reward: (x-80)/10 up to 90, 1 on (90, 130), (180-x)/50 from 130.
double glucose_reward(double cgm);
/// E[glucose_reward(Y)] for Y ~ N(mean, sd^2), in closed form.
double expected_glucose_reward(double mean, double sd);

/// Gaussian clusters standing in for digit images. Layout "line" puts the
/// centres at evenly spaced points of a random line in a seeded label order
/// (neighbouring clusters can carry distant labels); "subspace" draws them
/// at random in a random rank-r subspace. Reward N(-|y-a|, 0.1);
/// logging 1/20 on actions 0-4 and 3/20 on 5-9 for even labels, mirrored
/// for odd labels.
struct DigitConfig {
  std::size_t dims = 16;
  std::size_t classes = 10;
  double separation = 1.0;  // sd of the cluster centres per attribute
  std::string layout = "line";
  std::size_t rank = 3;  // subspace layout only
  double noise = 1.0;       // within-cluster sd
  double reward_sd = 0.1;
  double erase_rate = 0.5;
  std::uint64_t seed = 0;
};

class DigitBanditEnv final : public Environment {
 public:
  explicit DigitBanditEnv(DigitConfig config);

  std::string family() const override { return "digit"; }
  const FeatureSchema& schema() const override { return schema_; }
  std::size_t num_actions() const override { return config_.classes; }
  double erase_rate() const override { return config_.erase_rate; }
  nlohmann::json config() const override;

  Instance sample_instance(Rng& rng) const override;
  Vector logging_probs(const Instance& inst) const override;
  Vector reward_means(const Instance& inst) const override;
  double sample_reward(const Instance& inst, std::size_t a, Rng& rng) const override;

  const nn::Matrix& centers() const { return centers_; }

 private:
  DigitConfig config_;
  FeatureSchema schema_;
  nn::Matrix centers_;  // classes x dims
};

/// Semi-synthetic treatment-effect family in the style of response surface
/// B: correlated Gaussian plus binary covariates, mu0 = exp((X + 0.5) beta),
/// mu1 = X beta - omega with omega calibrated on the realized sample so the
/// in-sample mean of R(1) - R(0) equals tau exactly.
struct IhdpConfig {
  std::size_t continuous = 6;
  std::size_t binary = 19;
  double correlation = 0.3;
  double tau = 4.0;
  double treatment_scale = 0.15;  // logistic propensity slope
  double erase_rate = 0.3;
  std::uint64_t seed = 0;
};

class IhdpBEnv final : public Environment {
 public:
  explicit IhdpBEnv(IhdpConfig config);

  std::string family() const override { return "ihdp-b"; }
  const FeatureSchema& schema() const override { return schema_; }
  std::size_t num_actions() const override { return 2; }
  double erase_rate() const override { return config_.erase_rate; }
  nlohmann::json config() const override;

  Instance sample_instance(Rng& rng) const override;
  Vector logging_probs(const Instance& inst) const override;
  Vector reward_means(const Instance& inst) const override;
  double sample_reward(const Instance& inst, std::size_t a, Rng& rng) const override;

  /// Draws both potential outcomes and recalibrates omega on this sample.
  LoggedDataset generate(std::size_t n, std::uint64_t seed) const override;

  const Vector& beta() const { return beta_; }
  double omega() const { return omega_; }

 private:
  Vector outcome_covariates(const Feature& x) const;
  double linear(const Feature& x) const;
  double control_mean(const Feature& x) const;

  IhdpConfig config_;
  FeatureSchema schema_;
  Vector beta_;
  Vector treat_weights_;
  nn::Matrix chol_;     // Cholesky factor of the continuous covariate correlation
  Vector binary_rate_;  // Bernoulli rates
  double omega_ = 0.0;  // calibrated on a large reference sample
};

/// Nine correlated Gaussian patient features, ten doses k/9. CGM =
/// intercept + w.z + dose_linear d + dose_quadratic d^2 + N(0, noise^2).
/// Logging mixes a softmax "clinician" over expected reward (on the
/// complete features) with a uniform choice.
struct GlucoseConfig {
  std::size_t dims = 9;
  std::size_t doses = 10;
  double correlation = 0.5;
  Vector weights{21.0, -15.0, 12.0, 18.0, -9.0, 13.5, -7.5, 6.0, 9.0};
  double intercept = 140.0;
  double dose_linear = -120.0;
  double dose_quadratic = 60.0;
  double noise = 5.0;
  double clinician_temperature = 0.5;
  double uniform_share = 0.5;
  double erase_rate = 0.3;
  std::uint64_t seed = 0;
};

class GlucoseEnv final : public Environment {
 public:
  explicit GlucoseEnv(GlucoseConfig config);

  std::string family() const override { return "glucose"; }
  const FeatureSchema& schema() const override { return schema_; }
  std::size_t num_actions() const override { return config_.doses; }
  double erase_rate() const override { return config_.erase_rate; }
  nlohmann::json config() const override;

  Instance sample_instance(Rng& rng) const override;
  Vector logging_probs(const Instance& inst) const override;
  Vector reward_means(const Instance& inst) const override;
  double sample_reward(const Instance& inst, std::size_t a, Rng& rng) const override;

  double dose(std::size_t a) const;
  double cgm_mean(const Feature& x, std::size_t a) const;

 private:
  GlucoseConfig config_;
  FeatureSchema schema_;
  nn::Matrix chol_;
};

/// Four uniform binary attributes, three actions, theta(x, a) drawn from
/// U(-0.5, 0.5), reward theta + N(0, 0.1^2), uniform logging.
struct BinaryTableConfig {
  std::size_t attributes = 4;
  std::size_t actions = 3;
  double reward_sd = 0.1;
  double erase_rate = 0.0;
  std::uint64_t seed = 0;
};

class BinaryTableEnv final : public Environment {
 public:
  explicit BinaryTableEnv(BinaryTableConfig config);

  std::string family() const override { return "binary-table"; }
  const FeatureSchema& schema() const override { return schema_; }
  std::size_t num_actions() const override { return config_.actions; }
  double erase_rate() const override { return config_.erase_rate; }
  nlohmann::json config() const override;

  Instance sample_instance(Rng& rng) const override;
  Vector logging_probs(const Instance& inst) const override;
  Vector reward_means(const Instance& inst) const override;
  double sample_reward(const Instance& inst, std::size_t a, Rng& rng) const override;

  std::size_t state_index(const Feature& x) const;
  std::size_t num_states() const { return theta_.rows(); }
  Feature state(std::size_t index) const;
  const nn::Matrix& theta() const { return theta_; }

 private:
  BinaryTableConfig config_;
  FeatureSchema schema_;
  nn::Matrix theta_;
};

void to_json(nlohmann::json& j, const DigitConfig& c);
void from_json(const nlohmann::json& j, DigitConfig& c);
void to_json(nlohmann::json& j, const IhdpConfig& c);
void from_json(const nlohmann::json& j, IhdpConfig& c);
void to_json(nlohmann::json& j, const GlucoseConfig& c);
void from_json(const nlohmann::json& j, GlucoseConfig& c);
void to_json(nlohmann::json& j, const BinaryTableConfig& c);
void from_json(const nlohmann::json& j, BinaryTableConfig& c);

}  // namespace conspol
