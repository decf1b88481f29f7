#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "conspol/common.hpp"
#include "conspol/data/dataset.hpp"
#include "conspol/pvae/pvae.hpp"

namespace conspol {

/// Similarity kernel log p(x | x~_i) between a complete query feature and
/// each logged row.
class RowDensityModel {
 public:
  virtual ~RowDensityModel() = default;
  virtual std::size_t rows() const = 0;
  virtual double log_density(std::span<const double> x, std::size_t row) const = 0;
};

/// PVAE posterior densities, one PosteriorDensity per row built up front.
class PvaeRowDensities final : public RowDensityModel {
 public:
  /// components: see PvaeModel::posterior. Row i uses the seed mix(seed, i).
  PvaeRowDensities(const PvaeModel& model, const LoggedDataset& data, std::size_t components = 1,
                   std::uint64_t seed = 0, std::size_t threads = 1);

  std::size_t rows() const override { return densities_.size(); }
  double log_density(std::span<const double> x, std::size_t row) const override;

 private:
  std::shared_ptr<const FeatureSchema> schema_;
  std::vector<PosteriorDensity> densities_;
};

/// Indicator kernel: density 1 when x agrees with every observed attribute
/// of row i, 0 otherwise. Reduces the estimator to stratified IPS.
class ExactMatchDensities final : public RowDensityModel {
 public:
  explicit ExactMatchDensities(const LoggedDataset& data) : data_(&data) {}
  std::size_t rows() const override { return data_->size(); }
  double log_density(std::span<const double> x, std::size_t row) const override;

 private:
  const LoggedDataset* data_;
};

struct SpvaeOptions {
  std::size_t subsample = 0;  // M; 0 = use all rows
  double max_ips_weight = 100.0;
  std::uint64_t seed = 0;
};

struct ThetaEstimate {
  double value = 0.0;
  double ess = 0.0;  // 1 / sum w_i^2 over the weights used
  bool no_support = false;
};

/// theta^(x, a) = sum_i w_i 1[A_i = a] R_i / pi^_0(a | x~_i) with
/// w_i = p(x | x~_i) / sum_j p(x | x~_j). Holds references: the dataset and
/// density model must outlive the estimator.
class SpvaeEstimator {
 public:
  SpvaeEstimator(const LoggedDataset& data, const RowDensityModel& densities, Vector logged_propensity,
                 SpvaeOptions options = {});

  std::size_t num_actions() const { return data_->num_actions; }
  const LoggedDataset& data() const { return *data_; }
  const SpvaeOptions& options() const { return options_; }

  /// Row indices used for query x (all rows, or M drawn with a per-query seed).
  std::vector<std::size_t> sample_rows(std::span<const double> x) const;
  /// Normalized similarity weights over sample_rows(x), in that order.
  /// Throws EstimationError when every density underflows.
  Vector weights(std::span<const double> x, std::span<const std::size_t> rows) const;

  ThetaEstimate theta(std::span<const double> x, std::size_t a) const;
  std::vector<ThetaEstimate> theta_all(std::span<const double> x) const;

  /// Matched variant: weights renormalized within N_a, no propensity division.
  /// Throws EstimationError when no row took action a.
  ThetaEstimate theta_matched(std::span<const double> x, std::size_t a) const;
  /// All actions; unsupported ones are flagged with value 0.
  std::vector<ThetaEstimate> theta_matched_all(std::span<const double> x) const;

  /// sum_i w_i 1[A_i = a] / pi(a | x~_i) for the supplied propensities.
  double ips_weight_sum(std::span<const double> x, std::size_t a, std::span<const double> propensity) const;

 private:
  const LoggedDataset* data_;
  const RowDensityModel* densities_;
  Vector propensity_;
  SpvaeOptions options_;
};

/// One regenerated dataset for the expectation identity check.
struct IdentityTrial {
  LoggedDataset data;
  std::unique_ptr<RowDensityModel> densities;  // built over `data`
  Vector true_propensity;                      // pi_0(a_i | x_i)
  Feature query;
};

/// Empirical mean over trials of sum_i w_i 1[A_i = a] / pi_0(a | x~_i),
/// whose expectation is 1.
double ips_weight_identity_check(std::size_t action, std::size_t n_trials,
                                 const std::function<IdentityTrial(std::size_t)>& make_trial);

}  // namespace conspol
