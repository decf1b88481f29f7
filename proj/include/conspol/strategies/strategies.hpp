#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "conspol/common.hpp"
#include "conspol/estimators/cpvae.hpp"
#include "conspol/estimators/spvae.hpp"
#include "conspol/pvae/pvae.hpp"

namespace conspol {

enum class StrategyKind { Imputation, Mer, Conservative };

struct StrategySpec {
  StrategyKind kind = StrategyKind::Imputation;
  std::size_t t = 5;    // MER posterior samples
  double c = 0.1;       // conservative threshold ratio, 0 <= c < 1
  std::size_t u = 100;  // conservative prior samples
  std::size_t density_components = 1;  // L for p(x | x~) in the threshold

  static StrategySpec imputation();
  static StrategySpec mer(std::size_t t);
  static StrategySpec conservative(double c, std::size_t u);

  /// Throws ConfigError when a parameter is out of range.
  void validate() const;
  std::string name() const;

  friend bool operator==(const StrategySpec&, const StrategySpec&) = default;
};

void to_json(nlohmann::json& j, const StrategySpec& s);
void from_json(const nlohmann::json& j, StrategySpec& s);

/// Per-action reward estimates; unsupported actions carry a flag.
struct ActionScores {
  Vector values;
  std::vector<bool> no_support;
};

/// Estimated reward function plus the generative model used for
/// imputation, posterior sampling and prior sampling.
class RewardOracle {
 public:
  explicit RewardOracle(const PvaeModel& generator) : generator_(&generator) {}
  virtual ~RewardOracle() = default;

  const PvaeModel& generator() const { return *generator_; }
  virtual std::size_t num_actions() const = 0;

  /// theta^(x, a) for a complete feature x, all actions.
  virtual ActionScores score_complete(const Feature& x) const = 0;
  /// Scores used by the imputation strategy; defaults to scoring x^.
  virtual ActionScores score_imputation(const PartialFeature& xt, const Feature& xhat) const;
  /// MER scores: per-action mean over t posterior completions. The default
  /// shares one set of completions across actions.
  virtual ActionScores score_mer(const PartialFeature& xt, std::size_t t, Rng& rng) const;

 private:
  const PvaeModel* generator_;
};

/// SPVAE-backed oracle (IPS or matched weights).
class SpvaeOracle final : public RewardOracle {
 public:
  SpvaeOracle(const SpvaeEstimator& estimator, const PvaeModel& generator, bool matched = false)
      : RewardOracle(generator), estimator_(&estimator), matched_(matched) {}
  std::size_t num_actions() const override { return estimator_->num_actions(); }
  ActionScores score_complete(const Feature& x) const override;

 private:
  const SpvaeEstimator* estimator_;
  bool matched_;
};

/// CPVAE-backed oracle. Imputation feeds x~ directly; MER samples
/// completions from the conditional model per action.
class CpvaeOracle final : public RewardOracle {
 public:
  CpvaeOracle(const CpvaeModel& model, const PvaeModel& generator) : RewardOracle(generator), model_(&model) {}
  std::size_t num_actions() const override { return model_->num_actions(); }
  ActionScores score_complete(const Feature& x) const override;
  ActionScores score_imputation(const PartialFeature& xt, const Feature& xhat) const override;
  ActionScores score_mer(const PartialFeature& xt, std::size_t t, Rng& rng) const override;

 private:
  const CpvaeModel* model_;
};

/// Oracle over an arbitrary reward function (true means, toy tables).
class FunctionOracle final : public RewardOracle {
 public:
  FunctionOracle(std::function<Vector(const Feature&)> fn, std::size_t num_actions, const PvaeModel& generator)
      : RewardOracle(generator), fn_(std::move(fn)), num_actions_(num_actions) {}
  std::size_t num_actions() const override { return num_actions_; }
  ActionScores score_complete(const Feature& x) const override;

 private:
  std::function<Vector(const Feature&)> fn_;
  std::size_t num_actions_;
};

struct RiskEstimate {
  double value = 0.0;
  std::size_t missing_continuous = 0;
  bool defined = false;  // false when no continuous attribute is missing
};

/// Posterior mass excluded by the threshold under a Gaussian proxy:
/// P(chi2_{d_miss} > -2 ln c); 0 at c = 0.
double conservative_risk(std::size_t missing_continuous, double c);
RiskEstimate estimate_risk(const PvaeModel& model, const PartialFeature& xt, double c);

struct Diagnostics {
  std::size_t survivors = 0;  // |S| (conservative)
  std::size_t samples = 0;    // features drawn
  RiskEstimate risk;
  std::vector<bool> no_support;
};

struct Recommendation {
  std::size_t action = 0;
  Vector scores;
  StrategySpec strategy;
  Diagnostics diagnostics;
};

/// Argmax over supported actions, lowest index on ties. Throws
/// EstimationError when no action is supported.
std::size_t choose_action(const ActionScores& scores);

Recommendation recommend_imputation(const RewardOracle& oracle, const PartialFeature& xt);
Recommendation recommend_mer(const RewardOracle& oracle, const PartialFeature& xt, std::size_t t, Rng& rng);
Recommendation recommend_conservative(const RewardOracle& oracle, const PartialFeature& xt, double c, std::size_t u,
                                      Rng& rng, std::size_t density_components = 1);
Recommendation recommend(const RewardOracle& oracle, const PartialFeature& xt, const StrategySpec& spec, Rng& rng);

/// Everything the conservative strategy needs that does not depend on c,
/// so several thresholds can share one set of samples and scores.
struct ConservativeCandidates {
  Feature xhat;
  double xhat_log_density = 0.0;
  std::vector<Feature> samples;  // prior draws with x~'s observed attributes kept
  Vector sample_log_density;
  ActionScores xhat_scores;
  std::vector<ActionScores> sample_scores;
};

ConservativeCandidates conservative_candidates(const RewardOracle& oracle, const PartialFeature& xt, std::size_t u,
                                               Rng& rng, std::size_t density_components = 1);
/// Indices of samples with log p(x|x~) > log c + log p(x^|x~) (x^ is kept separately).
std::vector<std::size_t> conservative_survivors(const ConservativeCandidates& cand, double c);
Recommendation conservative_from_candidates(const ConservativeCandidates& cand, const PartialFeature& xt, double c,
                                            const PvaeModel& generator);

/// max_a min_{s in S} score[s][a] with lowest-index tie-break.
std::size_t max_min_action(const std::vector<Vector>& scores_by_member);

}  // namespace conspol
