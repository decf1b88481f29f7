#include "conspol/bench/evaluate.hpp"

#include <cmath>

namespace conspol {

std::vector<PolicyReport> evaluate_policies(const Environment& env, const std::vector<std::string>& names,
                                            const MultiRecommender& recommend, const EvalOptions& options) {
  if (names.empty()) throw ConfigError("evaluate: no policies given");
  if (options.n_test == 0) throw ConfigError("n_test must be positive");
  if (options.seeds.empty()) throw ConfigError("evaluate: no seeds given");
  const std::size_t p = names.size();
  const std::size_t n = options.n_test;
  const std::size_t k = env.num_actions();

  std::vector<PolicyReport> reports(p);
  for (std::size_t q = 0; q < p; ++q) reports[q].name = names[q];
  std::vector<Vector> pooled(p);

  for (const auto seed : options.seeds) {
    // outcomes[i * p + q]
    std::vector<InstanceOutcome> outcomes(n * p);
    parallel_for(n, options.threads, [&](std::size_t i) {
      Rng rng(mix_seed(seed, i));
      const Instance inst = env.sample_instance(rng);
      const PartialFeature xt = mask_mcar(inst.x, env.erase_rate(), rng);
      Rng policy_rng(mix_seed(rng(), 0x706f6cULL));
      // One realized outcome per (instance, action), shared by every policy.
      const std::uint64_t reward_seed = mix_seed(rng(), 0x726577ULL);
      const auto actions = recommend(xt, policy_rng);
      if (actions.size() != p) throw ShapeError("recommender returned the wrong number of actions");
      const Vector means = env.reward_means(inst);
      for (std::size_t q = 0; q < p; ++q) {
        if (actions[q] >= k) throw ShapeError("recommender returned an action out of range");
        Rng draw(mix_seed(reward_seed, actions[q]));
        auto& o = outcomes[i * p + q];
        o.seed = seed;
        o.index = i;
        o.action = actions[q];
        o.expected_reward = means[actions[q]];
        o.reward = env.sample_reward(inst, actions[q], draw);
        o.label = inst.label;
      }
    });
    for (std::size_t q = 0; q < p; ++q) {
      Vector expected(n);
      SeedMetrics m;
      m.seed = seed;
      m.n_test = n;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& o = outcomes[i * p + q];
        expected[i] = o.expected_reward;
        pooled[q].push_back(o.expected_reward);
        if (o.reward < options.tail_threshold) ++m.tail_count;
        if (options.keep_instances) reports[q].instances.push_back(o);
      }
      m.avg_reward = pairwise_sum(expected) / static_cast<double>(n);
      m.tail_fraction = static_cast<double>(m.tail_count) / static_cast<double>(n);
      reports[q].seeds.push_back(m);
    }
  }

  const double s = static_cast<double>(options.seeds.size());
  for (std::size_t q = 0; q < p; ++q) {
    auto& r = reports[q];
    double sum = 0.0, tail_f = 0.0, tail_c = 0.0;
    for (const auto& m : r.seeds) {
      sum += m.avg_reward;
      tail_f += m.tail_fraction;
      tail_c += static_cast<double>(m.tail_count);
    }
    r.avg_reward = sum / s;
    r.tail_fraction = tail_f / s;
    r.tail_count = tail_c / s;
    r.n_test = n;
    const double total = static_cast<double>(pooled[q].size());
    if (total > 1.0) {
      const double mean = pairwise_sum(pooled[q]) / total;
      double ss = 0.0;
      for (double v : pooled[q]) ss += (v - mean) * (v - mean);
      r.se = std::sqrt(ss / (total - 1.0) / total);
    }
  }
  return reports;
}

AteResult estimate_ate(const LoggedDataset& data, const ThetaFunction& theta, std::size_t threads) {
  if (data.num_actions != 2) throw ConfigError("ATE estimation needs exactly two actions");
  if (!data.truth) throw DataError("ATE estimation needs retained counterfactuals");
  const std::size_t n = data.size();
  if (n == 0) throw DataError("ATE estimation on an empty dataset");
  const auto& t = *data.truth;
  const bool realized = t.potential_outcomes.rows() == n;
  Vector est(n), truth(n);
  parallel_for(n, threads, [&](std::size_t i) {
    est[i] = theta(i, data.features[i], 1) - theta(i, data.features[i], 0);
  });
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = realized ? t.potential_outcomes(i, 1) - t.potential_outcomes(i, 0)
                        : t.reward_means(i, 1) - t.reward_means(i, 0);
  }
  AteResult r;
  r.tau_hat = pairwise_sum(est) / static_cast<double>(n);
  r.tau_true = pairwise_sum(truth) / static_cast<double>(n);
  r.delta = std::abs(r.tau_hat - r.tau_true);
  return r;
}

}  // namespace conspol
