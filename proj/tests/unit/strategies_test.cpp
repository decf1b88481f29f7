#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "conspol/strategies/strategies.hpp"

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

// Reward -|x0 - a| over ten actions.
Vector distance_reward(const Feature& x) {
  Vector r(10);
  for (std::size_t a = 0; a < 10; ++a) r[a] = -std::abs(x[0] - double(a));
  return r;
}

}  // namespace

TEST_CASE("max-min: digit toy picks the midpoint") {
  const std::vector<Vector> s{distance_reward({0.0}), distance_reward({8.0})};
  // Independent enumeration over all actions.
  std::size_t best = 0;
  double best_v = -1e9;
  for (std::size_t a = 0; a < 10; ++a) {
    const double v = std::min(-std::abs(0.0 - double(a)), -std::abs(8.0 - double(a)));
    if (v > best_v) {
      best_v = v;
      best = a;
    }
  }
  CHECK(best == 4);
  CHECK(max_min_action(s) == 4);
  CHECK_THROWS_AS(max_min_action({}), ConfigError);
}

TEST_CASE("choose_action: ties, support flags, empty support") {
  CHECK(choose_action({{1.0, 3.0, 3.0}, {false, false, false}}) == 1);
  CHECK(choose_action({{1.0, 3.0, 2.0}, {false, true, false}}) == 2);
  CHECK_THROWS_AS(choose_action({{1.0}, {true}}), EstimationError);
}

TEST_CASE("strategy spec: validation and json") {
  CHECK_THROWS_AS(StrategySpec::conservative(1.0, 10).validate(), ConfigError);
  CHECK_THROWS_AS(StrategySpec::conservative(-0.1, 10).validate(), ConfigError);
  CHECK_THROWS_AS(StrategySpec::mer(0).validate(), ConfigError);
  CHECK_NOTHROW(StrategySpec::conservative(0.0, 1).validate());
  auto s = StrategySpec::conservative(0.25, 40);
  s.density_components = 4;
  nlohmann::json j = s;
  CHECK(j.get<StrategySpec>() == s);
  CHECK_THROWS_AS((nlohmann::json{{"kind", "greedy"}}.get<StrategySpec>()), ConfigError);
}

TEST_CASE("strategies: complete features make every strategy agree with imputation") {
  Rng init(2);
  const FeatureSchema schema({AttributeKind::continuous(4.5, 3.0), AttributeKind::continuous()});
  const PvaeModel gen(schema, tiny_dims(), init);
  FunctionOracle oracle(distance_reward, 10, gen);
  Rng rng(3);
  for (double v : {0.2, 3.6, 8.9}) {
    const auto xt = PartialFeature::complete({v, 1.0});
    const auto imp = recommend_imputation(oracle, xt);
    CHECK(imp.action == static_cast<std::size_t>(std::lround(v)));
    CHECK(recommend_mer(oracle, xt, 7, rng).action == imp.action);
    const auto cons = recommend_conservative(oracle, xt, 0.999, 30, rng);
    CHECK(cons.action == imp.action);
    CHECK(recommend(oracle, xt, StrategySpec::mer(3), rng).action == imp.action);
    CHECK_FALSE(cons.diagnostics.risk.defined);
  }
}

TEST_CASE("conservative: survivor sets are nested in c") {
  Rng init(4);
  const FeatureSchema schema(
      {AttributeKind::continuous(4.5, 3.0), AttributeKind::continuous(), AttributeKind::categorical(3)});
  const PvaeModel gen(schema, tiny_dims(), init);
  FunctionOracle oracle(distance_reward, 10, gen);
  const std::vector<double> grid{0.0, 0.001, 0.1, 0.3, 0.7, 0.95};
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    PartialFeature xt{{9.0 * uniform01(rng), standard_normal(rng), double(uniform_index(rng, 3))}, {0, 0, 0}};
    for (auto& m : xt.missing) m = uniform01(rng) < 0.5 ? 1 : 0;
    for (std::size_t j = 0; j < 3; ++j) {
      if (xt.missing[j]) xt.values[j] = 0.0;
    }
    const auto cand = conservative_candidates(oracle, xt, 25, rng);
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      const auto wide = conservative_survivors(cand, grid[i]);
      const auto narrow = conservative_survivors(cand, grid[i + 1]);
      CHECK(std::includes(wide.begin(), wide.end(), narrow.begin(), narrow.end()));
    }
    CHECK(conservative_survivors(cand, 0.0).size() == 25);
    for (const auto& x : cand.samples) {
      for (std::size_t j = 0; j < 3; ++j) {
        if (!xt.is_missing(j)) CHECK(x[j] == xt.values[j]);
      }
    }
    // A smaller c can only lower the max-min value.
    const auto lo = conservative_from_candidates(cand, xt, 0.1, gen);
    const auto hi = conservative_from_candidates(cand, xt, 0.7, gen);
    CHECK(lo.scores[lo.action] <= hi.scores[hi.action]);
  }
}

TEST_CASE("risk: closed form, monotonicity, Monte-Carlo check") {
  CHECK(conservative_risk(3, 0.0) == 0.0);
  CHECK(conservative_risk(0, 0.5) == 0.0);
  double prev = 0.0;
  for (int k = 1; k <= 9; ++k) {
    const double r = conservative_risk(4, 0.1 * k);
    CHECK(r > prev);
    prev = r;
  }
  // Two missing dimensions: P(chi2_2 > -2 ln c) = c.
  for (double c : {0.05, 0.3, 0.8}) CHECK(conservative_risk(2, c) == doctest::Approx(c).epsilon(1e-12));

  const double c = std::exp(-0.5);
  const double closed = conservative_risk(1, c);
  CHECK(std::abs(closed - 0.3173) < 0.001);
  Rng rng(6);
  std::size_t hits = 0;
  const std::size_t n = 1000000;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = standard_normal(rng);
    if (z * z > 1.0) ++hits;
  }
  CHECK(std::abs(double(hits) / double(n) - closed) < 0.001);
  CHECK_THROWS_AS(conservative_risk(1, 1.0), ConfigError);

  Rng init(1);
  const FeatureSchema schema({AttributeKind::continuous(), AttributeKind::categorical(2), AttributeKind::continuous()});
  const PvaeModel gen(schema, tiny_dims(), init);
  const auto r = estimate_risk(gen, PartialFeature{{0, 0, 0}, {1, 1, 0}}, c);
  CHECK(r.defined);
  CHECK(r.missing_continuous == 1);
  CHECK(r.value == closed);
}
