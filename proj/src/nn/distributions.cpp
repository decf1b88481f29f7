#include "conspol/nn/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace conspol::nn {

double gaussian_log_pdf(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("gaussian_log_pdf: sigma must be > 0, got " + std::to_string(sigma));
  const double u = (x - mu) / sigma;
  return -kHalfLogTwoPi - std::log(sigma) - 0.5 * u * u;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

double categorical_log_pmf(std::size_t j, std::span<const double> logits) {
  if (j >= logits.size()) {
    throw DomainError("categorical_log_pmf: index " + std::to_string(j) + " out of " +
                      std::to_string(logits.size()));
  }
  return logits[j] - log_sum_exp(logits);
}

double kl_to_standard_normal(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw ShapeError("kl_to_standard_normal: mu/logvar length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    // expm1 keeps the result exactly 0 at logvar = 0 and avoids cancellation near it
    kl += mu[i] * mu[i] + (std::expm1(logvar[i]) - logvar[i]);
  }
  return 0.5 * kl;
}

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace conspol::nn
