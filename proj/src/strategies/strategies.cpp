#include "conspol/strategies/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

namespace conspol {

StrategySpec StrategySpec::imputation() { return {}; }

StrategySpec StrategySpec::mer(std::size_t t) {
  StrategySpec s;
  s.kind = StrategyKind::Mer;
  s.t = t;
  return s;
}

StrategySpec StrategySpec::conservative(double c, std::size_t u) {
  StrategySpec s;
  s.kind = StrategyKind::Conservative;
  s.c = c;
  s.u = u;
  return s;
}

void StrategySpec::validate() const {
  if (t == 0) throw ConfigError("strategy.t must be >= 1");
  if (u == 0) throw ConfigError("strategy.u must be >= 1");
  if (!(c >= 0.0 && c < 1.0)) throw ConfigError("strategy.c must satisfy 0 <= c < 1");
  if (density_components == 0) throw ConfigError("strategy.density_components must be >= 1");
}

std::string StrategySpec::name() const {
  switch (kind) {
    case StrategyKind::Imputation:
      return "imputation";
    case StrategyKind::Mer:
      return "mer";
    case StrategyKind::Conservative:
      return "conservative";
  }
  return "unknown";
}

void to_json(nlohmann::json& j, const StrategySpec& s) {
  j = {{"kind", s.name()}, {"t", s.t}, {"c", s.c}, {"u", s.u}, {"density_components", s.density_components}};
}

void from_json(const nlohmann::json& j, StrategySpec& s) {
  StrategySpec out;
  const auto kind = j.value("kind", std::string("imputation"));
  if (kind == "imputation") out.kind = StrategyKind::Imputation;
  else if (kind == "mer") out.kind = StrategyKind::Mer;
  else if (kind == "conservative") out.kind = StrategyKind::Conservative;
  else throw ConfigError("strategy.kind: unknown strategy '" + kind + "'");
  out.t = j.value("t", out.t);
  out.c = j.value("c", out.c);
  out.u = j.value("u", out.u);
  out.density_components = j.value("density_components", out.density_components);
  out.validate();
  s = out;
}

ActionScores RewardOracle::score_imputation(const PartialFeature&, const Feature& xhat) const {
  return score_complete(xhat);
}

ActionScores RewardOracle::score_mer(const PartialFeature& xt, std::size_t t, Rng& rng) const {
  const auto samples = generator().sample_posterior_features(xt, t, rng);
  const std::size_t na = num_actions();
  ActionScores out{Vector(na, 0.0), std::vector<bool>(na, true)};
  std::vector<std::size_t> counts(na, 0);
  for (const auto& x : samples) {
    const auto s = score_complete(x);
    for (std::size_t a = 0; a < na; ++a) {
      if (s.no_support[a]) continue;
      out.values[a] += s.values[a];
      ++counts[a];
    }
  }
  for (std::size_t a = 0; a < na; ++a) {
    if (counts[a] == 0) continue;
    out.values[a] /= static_cast<double>(counts[a]);
    out.no_support[a] = false;
  }
  return out;
}

ActionScores SpvaeOracle::score_complete(const Feature& x) const {
  const auto est = matched_ ? estimator_->theta_matched_all(x) : estimator_->theta_all(x);
  ActionScores out;
  for (const auto& e : est) {
    out.values.push_back(e.value);
    out.no_support.push_back(e.no_support);
  }
  return out;
}

namespace {

ActionScores from_predictions(const std::vector<RewardPrediction>& preds) {
  ActionScores out;
  for (const auto& p : preds) {
    out.values.push_back(p.mean);
    out.no_support.push_back(false);
  }
  return out;
}

}  // namespace

ActionScores CpvaeOracle::score_complete(const Feature& x) const {
  return from_predictions(model_->predict_rewards(PartialFeature::complete(x)));
}

ActionScores CpvaeOracle::score_imputation(const PartialFeature& xt, const Feature&) const {
  return from_predictions(model_->predict_rewards(xt));
}

ActionScores CpvaeOracle::score_mer(const PartialFeature& xt, std::size_t t, Rng& rng) const {
  const std::size_t na = num_actions();
  ActionScores out{Vector(na, 0.0), std::vector<bool>(na, false)};
  for (std::size_t a = 0; a < na; ++a) {
    const auto samples = model_->sample_posterior_features(xt, a, t, rng);
    double sum = 0.0;
    for (const auto& x : samples) sum += model_->predict_reward(PartialFeature::complete(x), a).mean;
    out.values[a] = sum / static_cast<double>(t);
  }
  return out;
}

ActionScores FunctionOracle::score_complete(const Feature& x) const {
  Vector v = fn_(x);
  if (v.size() != num_actions_) throw ShapeError("reward function returned the wrong number of actions");
  return {std::move(v), std::vector<bool>(num_actions_, false)};
}

double conservative_risk(std::size_t missing_continuous, double c) {
  if (!(c >= 0.0 && c < 1.0)) throw ConfigError("risk: c must satisfy 0 <= c < 1");
  if (missing_continuous == 0 || c == 0.0) return 0.0;
  // P(chi2_k > -2 ln c) = Q(k/2, -ln c).
  return boost::math::gamma_q(0.5 * static_cast<double>(missing_continuous), -std::log(c));
}

RiskEstimate estimate_risk(const PvaeModel& model, const PartialFeature& xt, double c) {
  validate_feature(model.schema(), xt);
  RiskEstimate r;
  for (std::size_t j = 0; j < xt.size(); ++j) {
    if (xt.is_missing(j) && model.schema()[j].is_continuous()) ++r.missing_continuous;
  }
  r.defined = r.missing_continuous > 0;
  r.value = conservative_risk(r.missing_continuous, c);
  return r;
}

std::size_t choose_action(const ActionScores& scores) {
  std::size_t best = scores.values.size();
  for (std::size_t a = 0; a < scores.values.size(); ++a) {
    if (scores.no_support[a]) continue;
    if (best == scores.values.size() || scores.values[a] > scores.values[best]) best = a;
  }
  if (best == scores.values.size()) throw EstimationError("no action has support for this feature");
  return best;
}

namespace {

Recommendation finish(ActionScores scores, const StrategySpec& spec, Diagnostics diag) {
  Recommendation r;
  r.action = choose_action(scores);
  r.scores = std::move(scores.values);
  r.strategy = spec;
  diag.no_support = std::move(scores.no_support);
  r.diagnostics = std::move(diag);
  return r;
}

}  // namespace

Recommendation recommend_imputation(const RewardOracle& oracle, const PartialFeature& xt) {
  Rng unused(0);
  const Feature xhat = oracle.generator().impute(xt, ImputeMode::Mean, unused);
  Diagnostics diag;
  diag.samples = 1;
  return finish(oracle.score_imputation(xt, xhat), StrategySpec::imputation(), diag);
}

Recommendation recommend_mer(const RewardOracle& oracle, const PartialFeature& xt, std::size_t t, Rng& rng) {
  const auto spec = StrategySpec::mer(t);
  spec.validate();
  Diagnostics diag;
  diag.samples = t;
  return finish(oracle.score_mer(xt, t, rng), spec, diag);
}

ConservativeCandidates conservative_candidates(const RewardOracle& oracle, const PartialFeature& xt, std::size_t u,
                                               Rng& rng, std::size_t density_components) {
  if (u == 0) throw ConfigError("conservative strategy needs u >= 1");
  const auto& gen = oracle.generator();
  ConservativeCandidates cand;
  cand.xhat = gen.impute(xt, ImputeMode::Mean, rng);
  const auto density = gen.posterior(xt, density_components, rng);
  cand.xhat_log_density = density.log_density(cand.xhat);
  cand.xhat_scores = oracle.score_complete(cand.xhat);
  for (auto& x : gen.sample_prior_features(u, rng)) {
    // Prior draws are candidate completions of x~: its observed attributes are kept.
    x = overlay_observed(std::move(x), xt);
    cand.sample_log_density.push_back(density.log_density(x));
    cand.samples.push_back(std::move(x));
  }
  for (const auto& x : cand.samples) cand.sample_scores.push_back(oracle.score_complete(x));
  return cand;
}

std::vector<std::size_t> conservative_survivors(const ConservativeCandidates& cand, double c) {
  if (!(c >= 0.0 && c < 1.0)) throw ConfigError("conservative strategy needs 0 <= c < 1");
  std::vector<std::size_t> keep;
  if (c == 0.0) {
    for (std::size_t i = 0; i < cand.samples.size(); ++i) keep.push_back(i);
    return keep;
  }
  const double threshold = std::log(c) + cand.xhat_log_density;
  for (std::size_t i = 0; i < cand.samples.size(); ++i) {
    if (cand.sample_log_density[i] > threshold) keep.push_back(i);
  }
  return keep;
}

Recommendation conservative_from_candidates(const ConservativeCandidates& cand, const PartialFeature& xt, double c,
                                            const PvaeModel& generator) {
  const auto keep = conservative_survivors(cand, c);
  const std::size_t na = cand.xhat_scores.values.size();
  ActionScores scores{Vector(na, std::numeric_limits<double>::infinity()), std::vector<bool>(na, true)};
  auto absorb = [&](const ActionScores& s) {
    for (std::size_t a = 0; a < na; ++a) {
      if (s.no_support[a]) continue;
      scores.values[a] = std::min(scores.values[a], s.values[a]);
      scores.no_support[a] = false;
    }
  };
  absorb(cand.xhat_scores);
  for (std::size_t i : keep) absorb(cand.sample_scores[i]);
  for (std::size_t a = 0; a < na; ++a) {
    if (scores.no_support[a]) scores.values[a] = 0.0;
  }
  Diagnostics diag;
  diag.survivors = keep.size() + 1;
  diag.samples = cand.samples.size();
  diag.risk = estimate_risk(generator, xt, c);
  auto spec = StrategySpec::conservative(c, std::max<std::size_t>(1, cand.samples.size()));
  return finish(std::move(scores), spec, diag);
}

Recommendation recommend_conservative(const RewardOracle& oracle, const PartialFeature& xt, double c, std::size_t u,
                                      Rng& rng, std::size_t density_components) {
  auto spec = StrategySpec::conservative(c, u);
  spec.density_components = density_components;
  spec.validate();
  const auto cand = conservative_candidates(oracle, xt, u, rng, density_components);
  auto r = conservative_from_candidates(cand, xt, c, oracle.generator());
  r.strategy = spec;
  return r;
}

Recommendation recommend(const RewardOracle& oracle, const PartialFeature& xt, const StrategySpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case StrategyKind::Imputation:
      return recommend_imputation(oracle, xt);
    case StrategyKind::Mer:
      return recommend_mer(oracle, xt, spec.t, rng);
    case StrategyKind::Conservative:
      return recommend_conservative(oracle, xt, spec.c, spec.u, rng, spec.density_components);
  }
  throw ConfigError("unknown strategy");
}

std::size_t max_min_action(const std::vector<Vector>& scores_by_member) {
  if (scores_by_member.empty()) throw ConfigError("max-min over an empty set");
  const std::size_t na = scores_by_member.front().size();
  Vector worst(na, std::numeric_limits<double>::infinity());
  for (const auto& s : scores_by_member) {
    for (std::size_t a = 0; a < na; ++a) worst[a] = std::min(worst[a], s[a]);
  }
  return argmax_lowest(worst);
}

}  // namespace conspol
