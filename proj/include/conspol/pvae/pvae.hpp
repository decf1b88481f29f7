#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "conspol/common.hpp"
#include "conspol/pvae/feature.hpp"
#include "conspol/pvae/set_vae.hpp"

namespace conspol {

enum class ImputeMode { Mean, Sample };

/// Decoded distribution p(x | z) in raw attribute units.
struct DecodedFeature {
  Vector mean;   // continuous attributes only
  Vector sigma;  // continuous attributes only
  std::vector<Vector> probs;  // categorical attributes only
};

/// log p(x | z) summed over attributes, raw units.
double log_density(const FeatureSchema& schema, const DecodedFeature& decoded, std::span<const double> x);

/// Sample from p(x | z): categorical attributes are drawn; continuous ones
/// are the decoded means mu(z), plus N(0, sigma(z)^2) with decoder_noise.
Feature sample_feature(const FeatureSchema& schema, const DecodedFeature& decoded, Rng& rng,
                       bool decoder_noise = false);

/// Point decode: continuous means and categorical modes.
Feature mode_feature(const FeatureSchema& schema, const DecodedFeature& decoded);

/// Evaluator for the posterior predictive p(x | x~) approximated by the
/// average of p(x | z_l) over latent draws z_l (a single draw at the
/// posterior mean when built with one component).
class PosteriorDensity {
 public:
  PosteriorDensity(const FeatureSchema& schema, std::vector<DecodedFeature> components);

  double log_density(std::span<const double> x) const;
  const std::vector<DecodedFeature>& components() const { return components_; }

 private:
  // Per component: sum of Gaussian normalizers, 1 / sigma, log probabilities.
  struct Prepared {
    double constant = 0.0;
    Vector inv_sigma;
    std::vector<Vector> log_probs;
  };
  double component_log_density(std::size_t l, std::span<const double> x) const;

  const FeatureSchema* schema_;
  std::vector<DecodedFeature> components_;
  std::vector<Prepared> prepared_;
};

/// Partial VAE over a mixed continuous/categorical feature space.
class PvaeModel {
 public:
  PvaeModel() = default;
  PvaeModel(FeatureSchema schema, const NetworkDims& dims, Rng& rng);
  PvaeModel(FeatureSchema schema, SetVae network);

  const FeatureSchema& schema() const { return schema_; }
  const SetVae& network() const { return network_; }
  SetVae& network() { return network_; }

  PosteriorGaussian encode(const PartialFeature& xt) const;
  DecodedFeature decode(std::span<const double> z) const;

  /// Single-sample ELBO estimate on the observed attributes (n_mc draws averaged).
  double elbo(const PartialFeature& xt, Rng& rng, std::size_t n_mc = 1) const;

  /// Completes x~: Mean decodes at the posterior mean (categorical modes);
  /// Sample draws z ~ q(z | x~) then decodes with sample_feature. Observed
  /// attributes are kept.
  Feature impute(const PartialFeature& xt, ImputeMode mode, Rng& rng, bool decoder_noise = false) const;

  /// components == 1: decode at the posterior mean; otherwise average over
  /// that many draws from q(z | x~).
  PosteriorDensity posterior(const PartialFeature& xt, std::size_t components, Rng& rng) const;
  double posterior_log_density(std::span<const double> x, const PartialFeature& xt, Rng& rng,
                               std::size_t components = 1) const;

  /// t completions with z ~ q(z | x~), decoded by sample_feature (observed attributes kept).
  std::vector<Feature> sample_posterior_features(const PartialFeature& xt, std::size_t t, Rng& rng,
                                                 bool decoder_noise = false) const;
  /// u features decoded by sample_feature from z ~ N(0, I).
  std::vector<Feature> sample_prior_features(std::size_t u, Rng& rng, bool decoder_noise = false) const;

  SetVae::TrainingSample training_sample(const PartialFeature& xt) const;

  friend bool operator==(const PvaeModel&, const PvaeModel&) = default;

 private:
  DecodedFeature to_raw(const HeadParams& heads) const;
  Vector sample_latent(const PosteriorGaussian& q, Rng& rng) const;

  FeatureSchema schema_;
  SetVae network_;
};

void to_json(nlohmann::json& j, const PvaeModel& m);
void from_json(const nlohmann::json& j, PvaeModel& m);

struct PvaeConfig {
  NetworkDims dims;
  OptimizerConfig optimizer;
};

void to_json(nlohmann::json& j, const PvaeConfig& c);
void from_json(const nlohmann::json& j, PvaeConfig& c);

struct PvaeTrainResult {
  PvaeModel model;
  std::vector<double> elbo_trace;  // mean ELBO: initial, then per epoch
};

/// Fits a PVAE to partially observed features. Deterministic given the seed.
PvaeTrainResult train_pvae(const FeatureSchema& schema, std::span<const PartialFeature> data,
                           const PvaeConfig& config);

}  // namespace conspol
