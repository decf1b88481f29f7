#include "conspol/nn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace conspol::nn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out) {
  const std::size_t n = w.cols();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = w.data().data() + r * n;
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

void matvec_transposed_add(const Matrix& w, std::span<const double> y, std::span<double> out) {
  const std::size_t n = w.cols();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    const double* row = w.data().data() + r * n;
    for (std::size_t c = 0; c < n; ++c) out[c] += row[c] * yr;
  }
}

void outer_add(std::span<const double> y, std::span<const double> x, Matrix& g) {
  const std::size_t n = g.cols();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* row = g.data().data() + r * n;
    for (std::size_t c = 0; c < n; ++c) row[c] += yr * x[c];
  }
}

}  // namespace conspol::nn
