#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "json.hpp"

#include "conspol/common.hpp"
#include "conspol/nn/matrix.hpp"

namespace conspol {

/// Small discrete environment: feature states enumerated row-major over the
/// attribute cardinalities (attribute 0 most significant), a prior over
/// states, an observation channel, and a mean-reward table.
struct DiscreteEnv {
  std::vector<std::size_t> cardinalities;
  Vector prior;                           // one entry per state
  Vector erasure;                         // per-attribute erasure probability
  std::optional<nn::Matrix> channel;      // explicit p(y | x) table (states x outputs); overrides erasure
  nn::Matrix theta;                       // states x actions
  std::size_t max_pairs = std::size_t{1} << 24;  // enumeration budget for (x, y) pairs

  std::size_t num_states() const;
  std::size_t num_actions() const { return theta.cols(); }
  std::vector<std::size_t> state(std::size_t index) const;
  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  /// Uniform X over {0,1}^4, erasure 1/2 per bit, two actions with mean
  /// rewards (x1+x2)/3 and (x3+x4)/3 + 0.1.
  static DiscreteEnv four_bit();
};

void to_json(nlohmann::json& j, const DiscreteEnv& env);
void from_json(const nlohmann::json& j, DiscreteEnv& env);

/// Entropies and informations in bits.
struct Decomposition {
  double h_a = 0.0;            // H(a(X))
  double i_xxt = 0.0;          // I(X; X~)
  double i_cond = 0.0;         // I(X; X~ | a(X))
  double h_cond_direct = 0.0;  // H(a(X) | X~) from the joint
  double h_cond_prop1 = 0.0;   // H(a(X)) - (I(X; X~) - I(X; X~ | a(X)))
  double i_a_xt = 0.0;         // I(a(X); X~)
};

/// a(x) = argmax_a theta(x, a), lowest index on ties.
std::vector<std::size_t> best_action_map(const DiscreteEnv& env);

/// Exact enumeration. Throws CapacityError when the (x, y) pair count
/// exceeds env.max_pairs.
Decomposition decomposition(const DiscreteEnv& env);

/// 2^{-H(a(X) | X~)}.
double heuristic_accuracy(const Decomposition& d);

/// Probability that the MAP rule x~ -> argmax_a P(a(X) = a | x~) is right.
double bayes_accuracy(const DiscreteEnv& env);

}  // namespace conspol
