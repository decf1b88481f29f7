#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "conspol/nn/params.hpp"

namespace conspol::nn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  // Keeps near-zero gradients from being judged on roundoff alone.
  double floor = 1e-4;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  // Coordinates whose central difference does not converge (halving the step
  // changes it by more than the tolerance), i.e. the stencil straddles a ReLU
  // kink. They are excluded from pass/fail and counted here.
  std::size_t nondifferentiable = 0;
  double max_relative_error = 0.0;
  std::string worst;

  bool ok() const { return failed == 0; }
};

/// Compares analytic gradients against central finite differences of `loss`.
/// `params` must alias the storage that `loss` reads; every coordinate is
/// perturbed in place and restored.
GradCheckReport check_gradients(const ParamList& params, const ParamList& analytic,
                                const std::function<double()>& loss,
                                const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace conspol::nn
