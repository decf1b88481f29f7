#pragma once

// Independent reference computations used by the tests. Kept deliberately
// naive (no shared code with the library beyond plain types).

#include <cmath>
#include <vector>

#include "conspol/nn/dense_net.hpp"

namespace oracle {

inline std::vector<double> dense_eval(const conspol::nn::DenseNet& net, std::vector<double> x) {
  for (const auto& layer : net.layers()) {
    std::vector<double> y(layer.weight.rows());
    for (std::size_t r = 0; r < y.size(); ++r) {
      double acc = layer.bias[r];
      for (std::size_t c = 0; c < x.size(); ++c) acc += layer.weight(r, c) * x[c];
      if (layer.activation == conspol::nn::Activation::Relu && acc < 0.0) acc = 0.0;
      y[r] = acc;
    }
    x = std::move(y);
  }
  return x;
}

inline double normal_log_pdf(double x, double mu, double sigma) {
  const double pi = 3.14159265358979323846;
  return -0.5 * std::log(2.0 * pi * sigma * sigma) - (x - mu) * (x - mu) / (2.0 * sigma * sigma);
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace oracle
