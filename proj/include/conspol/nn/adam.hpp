#pragma once

#include <cstddef>
#include <vector>

#include "conspol/common.hpp"
#include "conspol/nn/params.hpp"

namespace conspol::nn {

/// Adam moment accumulators. Shapes are bound to the parameter list on the
/// first step and checked on every later step.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
};

/// One bias-corrected Adam update of `params` in place.
/// Throws TrainingError naming the parameter block if a gradient is not finite.
void adam_step(const ParamList& params, const ParamList& grads, AdamState& state);

}  // namespace conspol::nn
