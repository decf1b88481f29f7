#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace conspol {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

// Error hierarchy. The CLI maps these onto exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument or configuration outside the documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between tensors, schemas or caches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input outside a function's mathematical domain (e.g. sigma <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent data or model files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Estimation failed (all similarity weights underflowed, no support, ...).
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Enumeration would exceed the configured state budget.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// splitmix64 finalizer; used to derive independent per-instance seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

/// Hash of the bit patterns of a vector of doubles (order-sensitive).
std::uint64_t hash_values(std::span<const double> values);

double standard_normal(Rng& rng);
double uniform01(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);
std::size_t sample_categorical(Rng& rng, std::span<const double> probs);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write results by index so the outcome
/// does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Pairwise (cascade) summation; result is independent of thread count.
double pairwise_sum(std::span<const double> values);

std::size_t argmax_lowest(std::span<const double> values);

}  // namespace conspol
