#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>

#include "json.hpp"

#include "conspol/common.hpp"
#include "conspol/data/dataset.hpp"

namespace conspol {

/// One simulated unit: its complete feature and latent label (-1 if none).
struct Instance {
  Feature x;
  int label = -1;
};

/// A synthetic logged-bandit environment. Fixed parameters (cluster
/// centres, coefficients, reward tables) are drawn from the configuration
/// seed at construction; datasets and test draws use their own seeds.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string family() const = 0;
  virtual const FeatureSchema& schema() const = 0;
  virtual std::size_t num_actions() const = 0;
  /// MCAR rate applied to generated datasets and test instances.
  virtual double erase_rate() const = 0;
  virtual nlohmann::json config() const = 0;

  virtual Instance sample_instance(Rng& rng) const = 0;
  virtual Vector logging_probs(const Instance& inst) const = 0;
  virtual Vector reward_means(const Instance& inst) const = 0;
  virtual double sample_reward(const Instance& inst, std::size_t a, Rng& rng) const = 0;

  /// Logged dataset with ground truth; the default draws instances, logs an
  /// action from logging_probs, samples its reward, then masks MCAR.
  virtual LoggedDataset generate(std::size_t n, std::uint64_t seed) const;
};

/// Builds an environment from a JSON description with a "family" field
/// (digit, ihdp-b, glucose, binary-table).
std::unique_ptr<Environment> make_environment(const nlohmann::json& config);

/// Masks each cell independently with probability `rate`; masked values are zeroed.
PartialFeature mask_mcar(const Feature& x, double rate, Rng& rng);

}  // namespace conspol
