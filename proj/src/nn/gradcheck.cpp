#include "conspol/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "conspol/common.hpp"

namespace conspol::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double central_difference(double& x, double h, const std::function<double()>& loss) {
  const double saved = x;
  x = saved + h;
  const double up = loss();
  x = saved - h;
  const double down = loss();
  x = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace

GradCheckReport check_gradients(const ParamList& params, const ParamList& analytic,
                                const std::function<double()>& loss,
                                const GradCheckOptions& options) {
  if (params.size() != analytic.size()) throw ShapeError("check_gradients: block count mismatch");
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].values.size() != analytic[b].values.size()) {
      throw ShapeError("check_gradients: shape mismatch in " + params[b].name);
    }
    for (std::size_t i = 0; i < params[b].values.size(); ++i) {
      double& x = params[b].values[i];
      const double a = analytic[b].values[i];
      const double numeric = central_difference(x, options.step, loss);
      double err = relative_error(a, numeric, options.floor);
      ++report.checked;
      if (err > options.tolerance) {
        const double refined = central_difference(x, 0.5 * options.step, loss);
        if (relative_error(refined, numeric, options.floor) > options.tolerance) {
          ++report.nondifferentiable;
          continue;
        }
        ++report.failed;
      }
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst = params[b].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace conspol::nn
