#include "conspol/estimators/cpvae.hpp"

#include <cmath>
#include <string>

#include "conspol/pvae/pvae.hpp"

namespace conspol {

namespace {

std::vector<AttributeKind> with_reward(const FeatureSchema& schema, double mean, double std) {
  auto attrs = schema.attributes();
  attrs.push_back(AttributeKind::continuous(mean, std));
  return attrs;
}

}  // namespace

CpvaeModel::CpvaeModel(FeatureSchema schema, std::size_t num_actions, double reward_mean, double reward_std,
                       const NetworkDims& dims, Rng& rng)
    : schema_(std::move(schema)), num_actions_(num_actions) {
  if (num_actions_ == 0) throw ConfigError("conditional model needs at least one action");
  network_ = SetVae(with_reward(schema_, reward_mean, reward_std), num_actions_, dims, rng);
}

CpvaeModel::CpvaeModel(FeatureSchema schema, std::size_t num_actions, SetVae network)
    : schema_(std::move(schema)), num_actions_(num_actions), network_(std::move(network)) {
  const auto& attrs = network_.attributes();
  if (attrs.size() != schema_.size() + 1 || network_.condition_dim() != num_actions_ ||
      !attrs.back().is_continuous() ||
      !std::equal(schema_.attributes().begin(), schema_.attributes().end(), attrs.begin())) {
    throw DataError("conditional network does not match the schema and action count");
  }
}

Vector CpvaeModel::one_hot(std::size_t a) const {
  if (a >= num_actions_) throw ConfigError("action " + std::to_string(a) + " out of range");
  Vector v(num_actions_, 0.0);
  v[a] = 1.0;
  return v;
}

SetVae::TrainingSample CpvaeModel::training_sample(const PartialFeature& xt, std::size_t a, double reward,
                                                   double weight) const {
  validate_feature(schema_, xt);
  const std::size_t d = schema_.size();
  SetVae::TrainingSample s;
  s.encoder_values.assign(d + 1, 0.0);
  s.targets.assign(d + 1, 0.0);
  s.encoder_missing = xt.missing;
  s.encoder_missing.push_back(0);
  s.scored.assign(d + 1, 0);
  for (std::size_t j = 0; j < d; ++j) {
    if (xt.is_missing(j)) continue;
    s.encoder_values[j] = network_.encoder_input(j, xt.values[j]);
    s.targets[j] = network_.target_value(j, xt.values[j]);
    s.scored[j] = 1;
  }
  s.encoder_values[d] = network_.encoder_input(d, reward);
  s.targets[d] = network_.target_value(d, reward);
  s.scored[d] = 1;
  s.condition = one_hot(a);
  s.weight = weight;
  return s;
}

Vector CpvaeModel::aggregate(const PartialFeature& xt) const {
  validate_feature(schema_, xt);
  const std::size_t d = schema_.size();
  Vector values(d + 1, 0.0);
  std::vector<std::uint8_t> missing = xt.missing;
  missing.push_back(1);
  for (std::size_t j = 0; j < d; ++j) {
    if (!xt.is_missing(j)) values[j] = network_.encoder_input(j, xt.values[j]);
  }
  return network_.aggregate(values, missing);
}

PosteriorGaussian CpvaeModel::encode(const PartialFeature& xt, std::size_t a) const {
  return network_.encode_aggregate(aggregate(xt), one_hot(a));
}

RewardPrediction CpvaeModel::reward_from_heads(const HeadParams& heads) const {
  const auto& r = network_.attributes().back();
  const std::size_t d = schema_.size();
  return {r.mean + r.std * heads.mean[d], r.std * heads.sigma[d]};
}

RewardPrediction CpvaeModel::predict_reward(const PartialFeature& xt, std::size_t a, PredictMode mode,
                                            std::size_t draws, Rng* rng) const {
  const Vector cond = one_hot(a);
  const auto q = network_.encode_aggregate(aggregate(xt), cond);
  if (mode == PredictMode::Point) return reward_from_heads(network_.decode(q.mu, cond));
  if (draws == 0 || rng == nullptr) throw ConfigError("Monte-Carlo reward prediction needs draws >= 1 and an rng");
  double sum = 0.0;
  double sq = 0.0;
  double var = 0.0;
  Vector z(q.mu.size());
  for (std::size_t l = 0; l < draws; ++l) {
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = q.mu[k] + std::exp(0.5 * q.logvar[k]) * standard_normal(*rng);
    const auto p = reward_from_heads(network_.decode(z, cond));
    sum += p.mean;
    sq += p.mean * p.mean;
    var += p.sigma * p.sigma;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, var / n + sq / n - mean * mean))};
}

std::vector<RewardPrediction> CpvaeModel::predict_rewards(const PartialFeature& xt) const {
  const Vector g = aggregate(xt);
  std::vector<RewardPrediction> out(num_actions_);
  for (std::size_t a = 0; a < num_actions_; ++a) {
    const Vector cond = one_hot(a);
    const auto q = network_.encode_aggregate(g, cond);
    out[a] = reward_from_heads(network_.decode(q.mu, cond));
  }
  return out;
}

std::vector<Feature> CpvaeModel::sample_posterior_features(const PartialFeature& xt, std::size_t a, std::size_t t,
                                                           Rng& rng, bool decoder_noise) const {
  if (t == 0) throw ConfigError("number of posterior samples must be positive");
  const Vector cond = one_hot(a);
  const auto q = network_.encode_aggregate(aggregate(xt), cond);
  const std::size_t d = schema_.size();
  std::vector<Feature> out;
  out.reserve(t);
  Vector z(q.mu.size());
  for (std::size_t l = 0; l < t; ++l) {
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = q.mu[k] + std::exp(0.5 * q.logvar[k]) * standard_normal(rng);
    const auto heads = network_.decode(z, cond);
    Feature x(d);
    for (std::size_t j = 0; j < d; ++j) {
      const auto& attr = schema_[j];
      if (attr.is_continuous()) {
        const double noise = decoder_noise ? heads.sigma[j] * standard_normal(rng) : 0.0;
        x[j] = attr.mean + attr.std * (heads.mean[j] + noise);
      } else {
        x[j] = static_cast<double>(sample_categorical(rng, heads.probs[j]));
      }
    }
    out.push_back(overlay_observed(std::move(x), xt));
  }
  return out;
}

void to_json(nlohmann::json& j, const CpvaeModel& m) {
  j = {{"kind", "cpvae"}, {"schema", m.schema()}, {"num_actions", m.num_actions()}, {"network", m.network()}};
}

void from_json(const nlohmann::json& j, CpvaeModel& m) {
  if (j.value("kind", std::string{}) != "cpvae") throw DataError("not a CPVAE model file");
  m = CpvaeModel(j.at("schema").get<FeatureSchema>(), j.at("num_actions").get<std::size_t>(),
                 j.at("network").get<SetVae>());
}

void to_json(nlohmann::json& j, const CpvaeConfig& c) {
  j = {{"dims", c.dims},
       {"optimizer", c.optimizer},
       {"reward_dropout", c.reward_dropout},
       {"max_ips_weight", c.max_ips_weight},
       {"use_ips", c.use_ips}};
}

void from_json(const nlohmann::json& j, CpvaeConfig& c) {
  CpvaeConfig out;
  if (j.contains("dims")) out.dims = j.at("dims").get<NetworkDims>();
  if (j.contains("optimizer")) out.optimizer = j.at("optimizer").get<OptimizerConfig>();
  out.reward_dropout = j.value("reward_dropout", out.reward_dropout);
  out.max_ips_weight = j.value("max_ips_weight", out.max_ips_weight);
  out.use_ips = j.value("use_ips", out.use_ips);
  if (out.reward_dropout < 0.0 || out.reward_dropout >= 1.0) throw ConfigError("cpvae.reward_dropout must be in [0, 1)");
  if (!(out.max_ips_weight > 1.0)) throw ConfigError("cpvae.max_ips_weight must exceed 1");
  c = out;
}

CpvaeTrainResult train_cpvae(const LoggedDataset& data, std::span<const double> logged_propensity,
                             const CpvaeConfig& config) {
  data.validate();
  if (data.size() == 0) throw ConfigError("train_cpvae: empty dataset");
  if (logged_propensity.size() != data.size()) throw ShapeError("train_cpvae: one propensity per row is required");
  double mean = 0.0;
  for (double r : data.rewards) mean += r;
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (double r : data.rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(data.size());
  const double std = var > 1e-24 ? std::sqrt(var) : 1.0;

  Rng init_rng(mix_seed(config.optimizer.seed, 0x696e6974ULL));
  CpvaeTrainResult result{CpvaeModel(data.schema, data.num_actions, mean, std, config.dims, init_rng), {}};
  std::vector<SetVae::TrainingSample> samples;
  samples.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double w = 1.0;
    if (config.use_ips) {
      const double p = logged_propensity[i];
      if (!(p > 0.0)) throw DataError("train_cpvae: propensity of row " + std::to_string(i) + " is not positive");
      w = std::min(1.0 / p, config.max_ips_weight);
    }
    samples.push_back(result.model.training_sample(data.features[i], data.actions[i], data.rewards[i], w));
  }
  std::optional<EncoderDropout> dropout;
  if (config.reward_dropout > 0.0) dropout = EncoderDropout{result.model.reward_index(), config.reward_dropout};
  result.loss_trace = train_set_vae(result.model.network(), samples, config.optimizer, "train_cpvae", dropout);
  return result;
}

CpvaeTrainResult train_cpvae(const LoggedDataset& data, const PropensityModel& propensity, const PvaeModel& pvae,
                             const CpvaeConfig& config, std::size_t threads) {
  const Vector p = logged_propensities(propensity, pvae, data, threads);
  return train_cpvae(data, p, config);
}

}  // namespace conspol
