#include "conspol/bench/environment.hpp"

#include "conspol/bench/families.hpp"

namespace conspol {

PartialFeature mask_mcar(const Feature& x, double rate, Rng& rng) {
  PartialFeature out = PartialFeature::complete(x);
  if (rate <= 0.0) return out;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (uniform01(rng) < rate) {
      out.missing[j] = 1;
      out.values[j] = 0.0;
    }
  }
  return out;
}

LoggedDataset Environment::generate(std::size_t n, std::uint64_t seed) const {
  if (n == 0) throw ConfigError("dataset size n must be at least 1");
  const std::size_t k = num_actions();
  Rng feature_rng(mix_seed(seed, 1));
  Rng action_rng(mix_seed(seed, 2));
  Rng reward_rng(mix_seed(seed, 3));
  Rng mask_rng(mix_seed(seed, 4));

  LoggedDataset data;
  data.schema = schema();
  data.num_actions = k;
  GroundTruth truth;
  truth.reward_means = nn::Matrix(n, k);
  truth.logging = nn::Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const Instance inst = sample_instance(feature_rng);
    const Vector probs = logging_probs(inst);
    const Vector means = reward_means(inst);
    const std::size_t a = sample_categorical(action_rng, probs);
    data.actions.push_back(a);
    data.rewards.push_back(sample_reward(inst, a, reward_rng));
    data.features.push_back(mask_mcar(inst.x, erase_rate(), mask_rng));
    for (std::size_t b = 0; b < k; ++b) {
      truth.reward_means(i, b) = means[b];
      truth.logging(i, b) = probs[b];
    }
    truth.complete.push_back(inst.x);
    truth.labels.push_back(inst.label);
  }
  data.truth = std::move(truth);
  return data;
}

std::unique_ptr<Environment> make_environment(const nlohmann::json& config) {
  if (!config.is_object() || !config.contains("family")) {
    throw ConfigError("environment config needs a \"family\" field");
  }
  const auto family = config.at("family").get<std::string>();
  try {
    if (family == "digit") return std::make_unique<DigitBanditEnv>(config.get<DigitConfig>());
    if (family == "ihdp-b") return std::make_unique<IhdpBEnv>(config.get<IhdpConfig>());
    if (family == "glucose") return std::make_unique<GlucoseEnv>(config.get<GlucoseConfig>());
    if (family == "binary-table") return std::make_unique<BinaryTableEnv>(config.get<BinaryTableConfig>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("environment config (" + family + "): " + e.what());
  }
  throw ConfigError("family: unknown environment family '" + family + "'");
}

}  // namespace conspol
