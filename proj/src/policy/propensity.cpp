#include "conspol/policy/propensity.hpp"

#include <cmath>
#include <string>

#include "conspol/nn/adam.hpp"
#include "conspol/nn/distributions.hpp"

namespace conspol {

void to_json(nlohmann::json& j, const PropensityConfig& c) {
  j = {{"imputations", c.imputations}, {"epochs", c.epochs}, {"learning_rate", c.learning_rate},
       {"clip", c.clip},               {"seed", c.seed},     {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, PropensityConfig& c) {
  PropensityConfig out;
  out.imputations = j.value("imputations", out.imputations);
  out.epochs = j.value("epochs", out.epochs);
  out.learning_rate = j.value("learning_rate", out.learning_rate);
  out.clip = j.value("clip", out.clip);
  out.seed = j.value("seed", out.seed);
  out.threads = j.value("threads", out.threads);
  if (out.imputations == 0) throw ConfigError("propensity.imputations must be >= 1");
  if (!(out.learning_rate > 0.0)) throw ConfigError("propensity.learning_rate must be positive");
  if (!(out.clip > 0.0 && out.clip < 1.0)) throw ConfigError("propensity.clip must be in (0, 1)");
  c = out;
}

std::size_t propensity_design_width(const FeatureSchema& schema) {
  std::size_t w = 1;
  for (const auto& a : schema.attributes()) w += a.is_continuous() ? 1 : a.cardinality;
  return w;
}

Vector propensity_design(const FeatureSchema& schema, std::span<const double> x) {
  Vector phi;
  phi.reserve(propensity_design_width(schema));
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& a = schema[j];
    if (a.is_continuous()) {
      phi.push_back((x[j] - a.mean) / a.std);
    } else {
      for (std::size_t t = 0; t < a.cardinality; ++t) phi.push_back(static_cast<std::size_t>(x[j]) == t ? 1.0 : 0.0);
    }
  }
  phi.push_back(1.0);
  return phi;
}

Vector clip_and_normalize(Vector p, double clip) {
  double total = 0.0;
  for (double& v : p) {
    v = std::max(v, clip);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

Vector PropensityModel::sub_model_probs(std::size_t k, std::span<const double> x) const {
  const Vector phi = propensity_design(schema, x);
  Vector logits(num_actions);
  nn::matvec(weights[k], phi, logits);
  return nn::softmax(logits);
}

Vector PropensityModel::probs(std::span<const double> x) const {
  Vector avg(num_actions, 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const Vector p = sub_model_probs(k, x);
    for (std::size_t a = 0; a < num_actions; ++a) avg[a] += p[a];
  }
  for (double& v : avg) v /= static_cast<double>(weights.size());
  return clip_and_normalize(std::move(avg), clip);
}

void to_json(nlohmann::json& j, const PropensityModel& m) {
  j = {{"kind", "propensity"}, {"schema", m.schema}, {"num_actions", m.num_actions},
       {"clip", m.clip},       {"weights", m.weights}};
}

void from_json(const nlohmann::json& j, PropensityModel& m) {
  if (j.value("kind", std::string{}) != "propensity") throw DataError("not a propensity model file");
  PropensityModel out;
  out.schema = j.at("schema").get<FeatureSchema>();
  out.num_actions = j.at("num_actions").get<std::size_t>();
  out.clip = j.at("clip").get<double>();
  out.weights = j.at("weights").get<std::vector<nn::Matrix>>();
  const std::size_t width = propensity_design_width(out.schema);
  if (out.weights.empty()) throw DataError("propensity model has no sub-models");
  for (const auto& w : out.weights) {
    if (w.rows() != out.num_actions || w.cols() != width) throw DataError("propensity weights have wrong shape");
  }
  m = std::move(out);
}

nn::Matrix fit_softmax_regression(const FeatureSchema& schema, std::span<const Feature> features,
                                  std::span<const std::size_t> actions, std::size_t num_actions,
                                  std::size_t epochs, double learning_rate) {
  const std::size_t n = features.size();
  const std::size_t width = propensity_design_width(schema);
  std::vector<Vector> design(n);
  for (std::size_t i = 0; i < n; ++i) design[i] = propensity_design(schema, features[i]);
  nn::Matrix w(num_actions, width);
  nn::Matrix g(num_actions, width);
  nn::AdamState adam;
  adam.learning_rate = learning_rate;
  Vector logits(num_actions);
  for (std::size_t step = 0; step < epochs; ++step) {
    g.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      nn::matvec(w, design[i], logits);
      Vector p = nn::softmax(logits);
      p[actions[i]] -= 1.0;
      nn::outer_add(p, design[i], g);
    }
    for (double& v : g.data()) v /= static_cast<double>(n);
    nn::adam_step({{"propensity.weight", w.data()}}, {{"propensity.weight", g.data()}}, adam);
  }
  return w;
}

PropensityModel fit_propensity(const LoggedDataset& data, const PvaeModel& pvae, const PropensityConfig& config) {
  if (config.imputations == 0) throw ConfigError("propensity: imputations must be >= 1");
  if (!(config.clip > 0.0) || config.clip * static_cast<double>(data.num_actions) >= 1.0) {
    throw ConfigError("propensity: clip must satisfy 0 < clip < 1/|A|");
  }
  if (data.size() == 0) throw DataError("propensity: empty dataset");
  if (!(pvae.schema() == data.schema)) throw DataError("propensity: PVAE schema differs from the dataset schema");
  std::vector<std::size_t> counts(data.num_actions, 0);
  for (std::size_t a : data.actions) ++counts[a];
  for (std::size_t a = 0; a < data.num_actions; ++a) {
    if (counts[a] == 0) {
      throw DataError("propensity: action " + std::to_string(a) +
                      " never appears in the log (common support cannot hold)");
    }
  }

  PropensityModel model;
  model.schema = data.schema;
  model.num_actions = data.num_actions;
  model.clip = config.clip;
  model.weights.resize(config.imputations);
  parallel_for(config.imputations, config.threads, [&](std::size_t k) {
    Rng rng(mix_seed(config.seed, k));
    std::vector<Feature> completed(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& xt = data.features[i];
      completed[i] = xt.missing_count() == 0 ? xt.values : pvae.sample_posterior_features(xt, 1, rng).front();
    }
    model.weights[k] = fit_softmax_regression(data.schema, completed, data.actions, data.num_actions,
                                              config.epochs, config.learning_rate);
  });
  return model;
}

Vector estimate_propensity(const PropensityModel& model, const PvaeModel& pvae, const PartialFeature& xt) {
  if (xt.missing_count() == 0) return model.probs(xt.values);
  Rng unused(0);
  return model.probs(pvae.impute(xt, ImputeMode::Mean, unused));
}

Vector logged_propensities(const PropensityModel& model, const PvaeModel& pvae, const LoggedDataset& data,
                           std::size_t threads) {
  Vector out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    out[i] = estimate_propensity(model, pvae, data.features[i])[data.actions[i]];
  });
  return out;
}

}  // namespace conspol
