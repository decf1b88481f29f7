#include "conspol/pvae/pvae.hpp"

#include <algorithm>
#include <cmath>

#include "conspol/nn/distributions.hpp"

namespace conspol {

double log_density(const FeatureSchema& schema, const DecodedFeature& decoded, std::span<const double> x) {
  if (x.size() != schema.size()) throw ShapeError("density query has wrong number of attributes");
  double total = 0.0;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema[j].is_continuous()) {
      total += nn::gaussian_log_pdf(x[j], decoded.mean[j], decoded.sigma[j]);
    } else {
      const auto t = static_cast<std::size_t>(x[j]);
      if (x[j] < 0.0 || t >= schema[j].cardinality) throw ShapeError("category out of range in density query");
      total += std::log(decoded.probs[j][t]);
    }
  }
  return total;
}

Feature sample_feature(const FeatureSchema& schema, const DecodedFeature& decoded, Rng& rng, bool decoder_noise) {
  Feature x(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema[j].is_continuous()) {
      x[j] = decoded.mean[j];
      if (decoder_noise) x[j] += decoded.sigma[j] * standard_normal(rng);
    } else {
      x[j] = static_cast<double>(sample_categorical(rng, decoded.probs[j]));
    }
  }
  return x;
}

Feature mode_feature(const FeatureSchema& schema, const DecodedFeature& decoded) {
  Feature x(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    x[j] = schema[j].is_continuous() ? decoded.mean[j] : static_cast<double>(argmax_lowest(decoded.probs[j]));
  }
  return x;
}

PosteriorDensity::PosteriorDensity(const FeatureSchema& schema, std::vector<DecodedFeature> components)
    : schema_(&schema), components_(std::move(components)) {
  if (components_.empty()) throw ConfigError("posterior density needs at least one component");
  const std::size_t d = schema.size();
  for (const auto& c : components_) {
    Prepared p;
    p.inv_sigma.assign(d, 0.0);
    p.log_probs.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (schema[j].is_continuous()) {
        p.constant += -nn::kHalfLogTwoPi - std::log(c.sigma[j]);
        p.inv_sigma[j] = 1.0 / c.sigma[j];
      } else {
        for (double q : c.probs[j]) p.log_probs[j].push_back(std::log(q));
      }
    }
    prepared_.push_back(std::move(p));
  }
}

double PosteriorDensity::component_log_density(std::size_t l, std::span<const double> x) const {
  const auto& schema = *schema_;
  if (x.size() != schema.size()) throw ShapeError("density query has wrong number of attributes");
  const auto& p = prepared_[l];
  const auto& mean = components_[l].mean;
  double quad = 0.0;
  double cat = 0.0;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema[j].is_continuous()) {
      const double u = (x[j] - mean[j]) * p.inv_sigma[j];
      quad += u * u;
    } else {
      const auto t = static_cast<std::size_t>(x[j]);
      if (x[j] < 0.0 || t >= schema[j].cardinality) throw ShapeError("category out of range in density query");
      cat += p.log_probs[j][t];
    }
  }
  return p.constant - 0.5 * quad + cat;
}

double PosteriorDensity::log_density(std::span<const double> x) const {
  if (components_.size() == 1) return component_log_density(0, x);
  Vector logs(components_.size());
  for (std::size_t l = 0; l < components_.size(); ++l) logs[l] = component_log_density(l, x);
  return nn::log_sum_exp(logs) - std::log(static_cast<double>(components_.size()));
}

PvaeModel::PvaeModel(FeatureSchema schema, const NetworkDims& dims, Rng& rng)
    : schema_(std::move(schema)), network_(schema_.attributes(), 0, dims, rng) {}

PvaeModel::PvaeModel(FeatureSchema schema, SetVae network)
    : schema_(std::move(schema)), network_(std::move(network)) {
  if (network_.attributes() != schema_.attributes() || network_.condition_dim() != 0) {
    throw DataError("network does not match the feature schema");
  }
}

SetVae::TrainingSample PvaeModel::training_sample(const PartialFeature& xt) const {
  validate_feature(schema_, xt);
  SetVae::TrainingSample s;
  const std::size_t d = schema_.size();
  s.encoder_values.assign(d, 0.0);
  s.targets.assign(d, 0.0);
  s.encoder_missing = xt.missing;
  s.scored.assign(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    if (xt.is_missing(j)) continue;
    s.encoder_values[j] = network_.encoder_input(j, xt.values[j]);
    s.targets[j] = network_.target_value(j, xt.values[j]);
    s.scored[j] = 1;
  }
  return s;
}

PosteriorGaussian PvaeModel::encode(const PartialFeature& xt) const {
  const auto s = training_sample(xt);
  return network_.encode(s.encoder_values, s.encoder_missing, {});
}

DecodedFeature PvaeModel::to_raw(const HeadParams& heads) const {
  DecodedFeature out;
  const std::size_t d = schema_.size();
  out.mean.assign(d, 0.0);
  out.sigma.assign(d, 0.0);
  out.probs.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto& a = schema_[j];
    if (a.is_continuous()) {
      out.mean[j] = a.mean + a.std * heads.mean[j];
      out.sigma[j] = a.std * heads.sigma[j];
    } else {
      out.probs[j] = heads.probs[j];
    }
  }
  return out;
}

DecodedFeature PvaeModel::decode(std::span<const double> z) const { return to_raw(network_.decode(z, {})); }

Vector PvaeModel::sample_latent(const PosteriorGaussian& q, Rng& rng) const {
  Vector z(q.mu.size());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = q.mu[k] + std::exp(0.5 * q.logvar[k]) * standard_normal(rng);
  return z;
}

double PvaeModel::elbo(const PartialFeature& xt, Rng& rng, std::size_t n_mc) const {
  if (n_mc == 0) throw ConfigError("elbo needs at least one Monte-Carlo draw");
  const auto s = training_sample(xt);
  std::vector<Vector> noise(n_mc, Vector(network_.latent_dim()));
  for (auto& eps : noise) {
    for (double& e : eps) e = standard_normal(rng);
  }
  // The network scores standardized targets; convert to the raw-unit density.
  double jacobian = 0.0;
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    if (!xt.is_missing(j) && schema_[j].is_continuous()) jacobian += std::log(schema_[j].std);
  }
  return -network_.loss(s, noise, nullptr).loss - jacobian;
}

Feature PvaeModel::impute(const PartialFeature& xt, ImputeMode mode, Rng& rng, bool decoder_noise) const {
  const auto q = encode(xt);
  if (mode == ImputeMode::Mean) return overlay_observed(mode_feature(schema_, decode(q.mu)), xt);
  return overlay_observed(sample_feature(schema_, decode(sample_latent(q, rng)), rng, decoder_noise), xt);
}

PosteriorDensity PvaeModel::posterior(const PartialFeature& xt, std::size_t components, Rng& rng) const {
  if (components == 0) throw ConfigError("posterior density needs at least one component");
  const auto q = encode(xt);
  std::vector<DecodedFeature> parts;
  if (components == 1) {
    parts.push_back(decode(q.mu));
  } else {
    for (std::size_t l = 0; l < components; ++l) parts.push_back(decode(sample_latent(q, rng)));
  }
  return PosteriorDensity(schema_, std::move(parts));
}

double PvaeModel::posterior_log_density(std::span<const double> x, const PartialFeature& xt, Rng& rng,
                                        std::size_t components) const {
  validate_feature(schema_, x);
  return posterior(xt, components, rng).log_density(x);
}

std::vector<Feature> PvaeModel::sample_posterior_features(const PartialFeature& xt, std::size_t t, Rng& rng,
                                                          bool decoder_noise) const {
  if (t == 0) throw ConfigError("number of posterior samples must be positive");
  const auto q = encode(xt);
  std::vector<Feature> out;
  out.reserve(t);
  for (std::size_t l = 0; l < t; ++l) {
    out.push_back(overlay_observed(sample_feature(schema_, decode(sample_latent(q, rng)), rng, decoder_noise), xt));
  }
  return out;
}

std::vector<Feature> PvaeModel::sample_prior_features(std::size_t u, Rng& rng, bool decoder_noise) const {
  if (u == 0) throw ConfigError("number of prior samples must be positive");
  std::vector<Feature> out;
  out.reserve(u);
  Vector z(network_.latent_dim());
  for (std::size_t l = 0; l < u; ++l) {
    for (double& v : z) v = standard_normal(rng);
    out.push_back(sample_feature(schema_, decode(z), rng, decoder_noise));
  }
  return out;
}

void to_json(nlohmann::json& j, const PvaeModel& m) {
  j = {{"kind", "pvae"}, {"schema", m.schema()}, {"network", m.network()}};
}

void from_json(const nlohmann::json& j, PvaeModel& m) {
  if (j.value("kind", std::string{}) != "pvae") throw DataError("not a PVAE model file");
  m = PvaeModel(j.at("schema").get<FeatureSchema>(), j.at("network").get<SetVae>());
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"epochs", c.epochs},   {"batch", c.batch}, {"learning_rate", c.learning_rate},
       {"adam_epsilon", c.adam_epsilon}, {"seed", c.seed}, {"mc_samples", c.mc_samples}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  OptimizerConfig out;
  out.epochs = j.value("epochs", out.epochs);
  out.batch = j.value("batch", out.batch);
  out.learning_rate = j.value("learning_rate", out.learning_rate);
  out.adam_epsilon = j.value("adam_epsilon", out.adam_epsilon);
  out.seed = j.value("seed", out.seed);
  out.mc_samples = j.value("mc_samples", out.mc_samples);
  if (out.batch == 0 || out.mc_samples == 0 || !(out.learning_rate > 0.0) || !(out.adam_epsilon > 0.0)) {
    throw ConfigError("optimizer: batch, mc_samples, learning_rate and adam_epsilon must be positive");
  }
  c = out;
}

void to_json(nlohmann::json& j, const PvaeConfig& c) {
  j = {{"dims", c.dims}, {"optimizer", c.optimizer}};
}

void from_json(const nlohmann::json& j, PvaeConfig& c) {
  PvaeConfig out;
  if (j.contains("dims")) out.dims = j.at("dims").get<NetworkDims>();
  if (j.contains("optimizer")) out.optimizer = j.at("optimizer").get<OptimizerConfig>();
  c = out;
}

PvaeTrainResult train_pvae(const FeatureSchema& schema, std::span<const PartialFeature> data,
                           const PvaeConfig& config) {
  if (data.empty()) throw ConfigError("train_pvae: empty dataset");
  Rng init_rng(mix_seed(config.optimizer.seed, 0x696e6974ULL));
  PvaeTrainResult result{PvaeModel(schema, config.dims, init_rng), {}};
  std::vector<SetVae::TrainingSample> samples;
  samples.reserve(data.size());
  for (const auto& xt : data) samples.push_back(result.model.training_sample(xt));
  auto trace = train_set_vae(result.model.network(), samples, config.optimizer, "train_pvae");
  double jacobian_total = 0.0;
  for (const auto& xt : data) {
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (!xt.is_missing(j) && schema[j].is_continuous()) jacobian_total += std::log(schema[j].std);
    }
  }
  const double jacobian = jacobian_total / static_cast<double>(data.size());
  result.elbo_trace.reserve(trace.size());
  for (double loss : trace) result.elbo_trace.push_back(-loss - jacobian);
  return result;
}

}  // namespace conspol
