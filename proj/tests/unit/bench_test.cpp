#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "conspol/bench/evaluate.hpp"
#include "conspol/bench/families.hpp"
#include "conspol/bench/missingness.hpp"
#include "conspol/data/csv.hpp"

using namespace conspol;

namespace {

Vector ranks(const Vector& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vector r(v.size());
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t e = k;
    while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]]) ++e;
    for (std::size_t m = k; m <= e; ++m) r[idx[m]] = 0.5 * double(k + e);
    k = e + 1;
  }
  return r;
}

double spearman(const Vector& a, const Vector& b) {
  const Vector ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("glucose reward: anchor values and continuity") {
  CHECK(glucose_reward(80.0) == 0.0);
  CHECK(glucose_reward(100.0) == 1.0);
  CHECK(glucose_reward(230.0) == -1.0);
  CHECK(glucose_reward(60.0) == doctest::Approx(-2.0));
  CHECK(glucose_reward(155.0) == doctest::Approx(0.5));
  for (double b : {90.0, 130.0}) {
    CHECK(std::abs(glucose_reward(b - 1e-9) - glucose_reward(b + 1e-9)) < 1e-9);
    CHECK(glucose_reward(b) == 1.0);
  }
}

TEST_CASE("glucose reward: closed-form expectation matches quadrature") {
  for (double mean : {70.0, 95.0, 128.0, 180.0}) {
    const double sd = 5.0;
    const int n = 200000;
    const double lo = mean - 10 * sd, hi = mean + 10 * sd, h = (hi - lo) / n;
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      const double x = lo + (k + 0.5) * h;
      const double z = (x - mean) / sd;
      acc += glucose_reward(x) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2 * M_PI)) * h;
    }
    CHECK(expected_glucose_reward(mean, sd) == doctest::Approx(acc).epsilon(1e-7));
  }
  CHECK(expected_glucose_reward(100.0, 0.0) == 1.0);
}

TEST_CASE("digit bandit: reward law and even/odd logging") {
  DigitConfig cfg;
  cfg.seed = 3;
  DigitBanditEnv env(cfg);
  Rng rng(1);
  double mean = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Instance inst{Feature(cfg.dims, 0.0), 4};
    mean += env.sample_reward(inst, 4, rng) / 1000.0;
  }
  CHECK(std::abs(mean) < 0.02);

  const auto data = env.generate(10000, 2);
  for (int parity : {0, 1}) {
    Vector freq(10, 0.0);
    double count = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.truth->labels[i] % 2 != parity) continue;
      freq[data.actions[i]] += 1.0;
      count += 1.0;
    }
    for (std::size_t a = 0; a < 10; ++a) {
      const bool low = a < 5;
      const double expect = (parity == 0) == low ? 1.0 / 20.0 : 3.0 / 20.0;
      CHECK(std::abs(freq[a] / count - expect) < 0.02);
    }
  }
  for (std::size_t i = 0; i < 50; ++i) {
    double s = 0.0;
    for (std::size_t a = 0; a < 10; ++a) s += data.truth->logging(i, a);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("digit bandit: erase rate zero leaves every cell observed") {
  DigitConfig cfg;
  cfg.erase_rate = 0.0;
  DigitBanditEnv env(cfg);
  const auto data = env.generate(200, 1);
  for (const auto& f : data.features) CHECK(std::count(f.missing.begin(), f.missing.end(), 1) == 0);
}

TEST_CASE("ihdp-b: in-sample calibration and MCAR rate") {
  IhdpConfig cfg;
  cfg.seed = 5;
  cfg.erase_rate = 0.3;
  IhdpBEnv env(cfg);
  const auto data = env.generate(747, 8);
  const auto& po = data.truth->potential_outcomes;
  double tau = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) tau += (po(i, 1) - po(i, 0)) / double(data.size());
  CHECK(tau == doctest::Approx(4.0).epsilon(1e-9));
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(data.rewards[i] == po(i, data.actions[i]));

  const double sd = std::sqrt(0.3 * 0.7 / 747.0);
  double total = 0.0;
  for (std::size_t j = 0; j < 25; ++j) {
    double m = 0.0;
    for (const auto& f : data.features) m += f.missing[j];
    CHECK(std::abs(m / 747.0 - 0.3) < 3.5 * sd);
    total += m;
  }
  CHECK(std::abs(total / (25.0 * 747.0) - 0.3) < 0.015);
  for (double b : env.beta()) {
    const bool allowed = b == 0.0 || b == 0.1 || b == 0.2 || b == 0.3 || b == 0.4;
    CHECK(allowed);
  }
}

TEST_CASE("glucose bandit: logging floor and uniform half") {
  GlucoseConfig cfg;
  cfg.seed = 2;
  GlucoseEnv env(cfg);
  const auto data = env.generate(5000, 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t a = 0; a < 10; ++a) CHECK(data.truth->logging(i, a) >= 0.05);
  }
  Vector freq(10, 0.0);
  for (auto a : data.actions) freq[a] += 1.0 / 5000.0;
  CHECK(*std::min_element(freq.begin(), freq.end()) >= 0.03);
}

TEST_CASE("missingness: MCAR identity, MAR dependence, anchor errors") {
  DigitConfig cfg;
  cfg.erase_rate = 0.0;
  DigitBanditEnv env(cfg);
  const auto data = env.generate(5000, 6);
  Rng rng(2);
  const auto same = inject_missingness(data, MissingnessSpec{MissingKind::Mcar, 0.0, {}, 2.0}, rng);
  CHECK(same.features == data.features);

  MissingnessSpec mar{MissingKind::Mar, 0.3, 0, 2.0};
  const auto masked = inject_missingness(data, mar, rng);
  Vector anchor, count;
  for (const auto& f : masked.features) {
    CHECK(f.missing[0] == 0);
    anchor.push_back(f.values[0]);
    count.push_back(std::count(f.missing.begin(), f.missing.end(), 1));
  }
  CHECK(spearman(anchor, count) > 0.5);

  CHECK_THROWS_AS(inject_missingness(data, MissingnessSpec{MissingKind::Mar, 0.3, {}, 2.0}, rng), ConfigError);
  nlohmann::json j = mar;
  const auto back = j.get<MissingnessSpec>();
  CHECK(back.kind == MissingKind::Mar);
  CHECK(back.anchor == mar.anchor);
}

TEST_CASE("csv: dataset and truth round trip") {
  IhdpConfig cfg;
  IhdpBEnv env(cfg);
  const auto data = env.generate(30, 1);
  const auto text = dataset_csv(data);
  auto back = parse_dataset_csv(text, data.schema, data.num_actions);
  CHECK(back.features == data.features);
  CHECK(back.actions == data.actions);
  CHECK(back.rewards == data.rewards);
  back.truth = parse_truth_csv(truth_csv(data), back);
  CHECK(back == data);

  const auto na = parse_dataset_csv("x0,x1,action,reward\n1.5,NA,0,2\n,3,1,-1\n");
  CHECK(na.features[0].missing == std::vector<std::uint8_t>{0, 1});
  CHECK(na.features[1].missing == std::vector<std::uint8_t>{1, 0});
  CHECK(na.num_actions == 2);
  CHECK_THROWS_AS(parse_dataset_csv("x0,action,reward\n1,abc,0\n"), DataError);
  CHECK_THROWS_AS(parse_dataset_csv("x0,action,reward\n1,0\n"), DataError);
}

TEST_CASE("environment: json dispatch") {
  CHECK_THROWS_AS(make_environment({{"family", "mnist"}}), ConfigError);
  for (const char* fam : {"digit", "ihdp-b", "glucose", "binary-table"}) {
    const auto env = make_environment({{"family", fam}, {"seed", 3}});
    CHECK(env->family() == fam);
    CHECK(make_environment(env->config())->config() == env->config());
  }
}

TEST_CASE("evaluate: oracle and uniform recommenders on the digit bandit") {
  DigitConfig cfg;
  cfg.separation = 20.0;
  cfg.erase_rate = 0.0;
  DigitBanditEnv env(cfg);
  const auto nearest = [&](const PartialFeature& xt) {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t c = 0; c < 10; ++c) {
      double d = 0;
      for (std::size_t k = 0; k < xt.size(); ++k) d += std::pow(xt.values[k] - env.centers()(c, k), 2);
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    return best;
  };
  EvalOptions opt;
  opt.n_test = 20000;
  opt.seeds = {1, 2};
  const auto reps = evaluate_policies(env, {"oracle", "uniform"},
                                      [&](const PartialFeature& xt, Rng& rng) {
                                        return std::vector<std::size_t>{nearest(xt), uniform_index(rng, 10)};
                                      },
                                      opt);
  CHECK(reps[0].avg_reward == doctest::Approx(0.0));
  CHECK(reps[0].tail_count == 0.0);
  double enumerated = 0.0;
  for (int y = 0; y < 10; ++y)
    for (int a = 0; a < 10; ++a) enumerated -= std::abs(y - a) / 100.0;
  CHECK(std::abs(reps[1].avg_reward - enumerated) < 0.06);
  CHECK(reps[1].seeds.size() == 2);
  CHECK(reps[1].instances.size() == 40000);
  // sd of |y - a| over uniform y, a is 2.37; 40000 instances
  CHECK(reps[1].se == doctest::Approx(2.37 / 200.0).epsilon(0.05));
  CHECK(reps[0].se == 0.0);

  opt.tail_threshold = -100.0;
  opt.n_test = 200;
  const auto low = evaluate_policies(env, {"uniform"},
                                     [](const PartialFeature&, Rng& rng) {
                                       return std::vector<std::size_t>{uniform_index(rng, 10)};
                                     },
                                     opt);
  CHECK(low[0].tail_fraction == 0.0);
}

TEST_CASE("evaluate: results do not depend on the thread count") {
  DigitConfig cfg;
  DigitBanditEnv env(cfg);
  const MultiRecommender rec = [](const PartialFeature& xt, Rng& rng) {
    return std::vector<std::size_t>{uniform_index(rng, 10), xt.is_missing(0) ? 0u : 9u};
  };
  EvalOptions one;
  one.n_test = 300;
  EvalOptions four = one;
  four.threads = 4;
  const auto a = evaluate_policies(env, {"u", "m"}, rec, one);
  const auto b = evaluate_policies(env, {"u", "m"}, rec, four);
  for (std::size_t p = 0; p < 2; ++p) {
    CHECK(a[p].avg_reward == b[p].avg_reward);
    CHECK(a[p].tail_count == b[p].tail_count);
  }
}

TEST_CASE("evaluate: realized rewards depend on the instance and action, not the policy slot") {
  DigitConfig cfg;
  DigitBanditEnv env(cfg);
  const auto pick = [](const PartialFeature& xt) -> std::size_t { return xt.is_missing(0) ? 3u : 7u; };
  EvalOptions opt;
  opt.n_test = 400;
  opt.tail_threshold = -3.0;
  const auto alone = evaluate_policies(env, {"m"}, [&](const PartialFeature& xt, Rng&) {
    return std::vector<std::size_t>{pick(xt)};
  }, opt);
  const auto crowded = evaluate_policies(env, {"u", "m", "m2"}, [&](const PartialFeature& xt, Rng& rng) {
    return std::vector<std::size_t>{uniform_index(rng, 10), pick(xt), pick(xt)};
  }, opt);
  REQUIRE(alone[0].instances.size() == crowded[1].instances.size());
  for (std::size_t i = 0; i < alone[0].instances.size(); ++i) {
    CHECK(alone[0].instances[i].reward == crowded[1].instances[i].reward);
    CHECK(crowded[1].instances[i].reward == crowded[2].instances[i].reward);
  }
  CHECK(alone[0].tail_count == crowded[1].tail_count);
}

TEST_CASE("ate: oracle and zero estimators") {
  IhdpConfig cfg;
  cfg.seed = 1;
  IhdpBEnv env(cfg);
  const auto data = env.generate(747, 3);
  const auto oracle = estimate_ate(data, [&](std::size_t i, const PartialFeature&, std::size_t a) {
    return data.truth->reward_means(i, a);
  });
  CHECK(oracle.tau_true == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(oracle.delta < 0.2);
  const auto zero = estimate_ate(data, [](std::size_t, const PartialFeature&, std::size_t) { return 0.0; });
  CHECK(zero.delta == doctest::Approx(4.0).epsilon(1e-9));

  DigitBanditEnv digits(DigitConfig{});
  const auto many = digits.generate(20, 1);
  CHECK_THROWS_AS(estimate_ate(many, [](std::size_t, const PartialFeature&, std::size_t) { return 0.0; }),
                  ConfigError);
}
