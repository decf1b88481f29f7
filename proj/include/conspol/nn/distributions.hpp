#pragma once

#include <span>

#include "conspol/common.hpp"

namespace conspol::nn {

inline constexpr double kHalfLogTwoPi = 0.91893853320467274178;

/// log N(x; mu, sigma). Throws DomainError when sigma <= 0.
double gaussian_log_pdf(double x, double mu, double sigma);

double log_sum_exp(std::span<const double> values);
/// Max-subtracted softmax; entries are strictly positive and sum to 1.
Vector softmax(std::span<const double> logits);
double categorical_log_pmf(std::size_t j, std::span<const double> logits);

/// KL(N(mu, diag(exp(logvar))) || N(0, I)).
double kl_to_standard_normal(std::span<const double> mu, std::span<const double> logvar);

double softplus(double x);
double sigmoid(double x);

}  // namespace conspol::nn
