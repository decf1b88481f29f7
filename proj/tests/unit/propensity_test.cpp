#include <cmath>

#include "doctest.h"

#include "conspol/policy/propensity.hpp"

using namespace conspol;

namespace {

NetworkDims tiny_dims() {
  NetworkDims d;
  d.embedding_dim = 3;
  d.set_dim = 6;
  d.f_hidden = {6};
  d.latent_dim = 2;
  d.decoder_hidden = {6};
  return d;
}

Vector naive_softmax(const Vector& z) {
  double s = 0.0;
  for (double v : z) s += std::exp(v);
  Vector p;
  for (double v : z) p.push_back(std::exp(v) / s);
  return p;
}

}  // namespace

TEST_CASE("propensity: design vector") {
  const FeatureSchema schema({AttributeKind::continuous(1.0, 2.0), AttributeKind::categorical(3)});
  CHECK(propensity_design_width(schema) == 5);
  CHECK(propensity_design(schema, Vector{5.0, 2.0}) == Vector{2.0, 0.0, 0.0, 1.0, 1.0});
}

TEST_CASE("propensity: clip and normalize") {
  const auto p = clip_and_normalize({0.0, 0.2, 0.8}, 0.05);
  CHECK(p[0] == doctest::Approx(0.05 / 1.05));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(clip_and_normalize({0.5, 0.5}, 0.01) == Vector{0.5, 0.5});
}

TEST_CASE("propensity: averaged sub-models") {
  PropensityModel m;
  m.schema = FeatureSchema({AttributeKind::continuous()});
  m.num_actions = 3;
  m.clip = 0.01;
  m.weights = {nn::Matrix(3, 2, {1.0, 0.0, -1.0, 0.5, 0.0, 0.0}), nn::Matrix(3, 2, {0.0, 2.0, 3.0, 0.0, -4.0, 0.0})};
  const double x = 0.7;
  const Vector a = naive_softmax({1.0 * x, -1.0 * x + 0.5, 0.0});
  const Vector b = naive_softmax({2.0, 3.0 * x, -4.0 * x});
  Vector avg{(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2};
  avg = clip_and_normalize(avg, 0.01);
  const auto p = m.probs(Vector{x});
  for (std::size_t k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(avg[k]).epsilon(1e-13));

  nlohmann::json j = m;
  CHECK(j.get<PropensityModel>() == m);
  j["weights"][0] = nn::Matrix(2, 2);
  CHECK_THROWS_AS(j.get<PropensityModel>(), DataError);
}

TEST_CASE("propensity: softmax regression recovers a logistic policy") {
  Rng rng(4);
  const FeatureSchema schema({AttributeKind::continuous()});
  std::vector<Feature> xs;
  std::vector<std::size_t> acts;
  for (int i = 0; i < 4000; ++i) {
    const double x = standard_normal(rng);
    const double p1 = 1.0 / (1.0 + std::exp(-(2.0 * x - 0.5)));
    xs.push_back({x});
    acts.push_back(uniform01(rng) < p1 ? 1 : 0);
  }
  const auto w = fit_softmax_regression(schema, xs, acts, 2, 800, 0.05);
  PropensityModel m{schema, 2, 1e-6, {w}};
  for (double x : {-1.0, 0.0, 0.5, 1.5}) {
    const double truth = 1.0 / (1.0 + std::exp(-(2.0 * x - 0.5)));
    CHECK(std::abs(m.probs(Vector{x})[1] - truth) < 0.05);
  }
}

TEST_CASE("propensity: fit on imputed data, errors and determinism") {
  Rng rng(5);
  LoggedDataset d;
  d.schema = FeatureSchema({AttributeKind::continuous(), AttributeKind::continuous()});
  d.num_actions = 2;
  for (int i = 0; i < 300; ++i) {
    const double x = standard_normal(rng);
    PartialFeature f{{x, x + 0.1 * standard_normal(rng)}, {0, 0}};
    if (uniform01(rng) < 0.3) {
      f.missing[0] = 1;
      f.values[0] = 0.0;
    }
    d.features.push_back(f);
    d.actions.push_back(x > 0 ? 1 : 0);
    d.rewards.push_back(0.0);
  }
  Rng init(1);
  const PvaeModel pvae(d.schema, tiny_dims(), init);
  PropensityConfig cfg;
  cfg.imputations = 3;
  cfg.epochs = 200;
  const auto a = fit_propensity(d, pvae, cfg);
  const auto b = fit_propensity(d, pvae, cfg);
  CHECK(a == b);
  CHECK(a.weights.size() == 3);
  const auto lp = logged_propensities(a, pvae, d);
  double mean = 0.0;
  for (double p : lp) {
    CHECK(p >= cfg.clip / (1.0 + 2 * cfg.clip));
    mean += p / double(lp.size());
  }
  CHECK(mean > 0.7);  // the second attribute separates the actions

  auto only_zero = d;
  for (auto& act : only_zero.actions) act = 0;
  CHECK_THROWS_AS(fit_propensity(only_zero, pvae, cfg), DataError);
}
