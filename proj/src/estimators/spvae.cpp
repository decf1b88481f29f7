#include "conspol/estimators/spvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace conspol {

PvaeRowDensities::PvaeRowDensities(const PvaeModel& model, const LoggedDataset& data, std::size_t components,
                                   std::uint64_t seed, std::size_t threads)
    : schema_(std::make_shared<const FeatureSchema>(model.schema())) {
  if (!(model.schema() == data.schema)) throw DataError("PVAE schema differs from the dataset schema");
  std::vector<std::optional<PosteriorDensity>> built(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Rng rng(mix_seed(seed, i));
    auto d = model.posterior(data.features[i], components, rng);
    built[i].emplace(*schema_, d.components());
  });
  densities_.reserve(data.size());
  for (auto& d : built) densities_.push_back(std::move(*d));
}

double PvaeRowDensities::log_density(std::span<const double> x, std::size_t row) const {
  return densities_[row].log_density(x);
}

double ExactMatchDensities::log_density(std::span<const double> x, std::size_t row) const {
  const auto& xt = data_->features[row];
  for (std::size_t j = 0; j < xt.size(); ++j) {
    if (!xt.is_missing(j) && xt.values[j] != x[j]) return -std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

SpvaeEstimator::SpvaeEstimator(const LoggedDataset& data, const RowDensityModel& densities,
                               Vector logged_propensity, SpvaeOptions options)
    : data_(&data), densities_(&densities), propensity_(std::move(logged_propensity)), options_(options) {
  if (densities.rows() != data.size()) throw ShapeError("density model rows do not match the dataset");
  if (propensity_.size() != data.size()) throw ShapeError("one logged propensity per row is required");
  if (options_.subsample > data.size()) throw ConfigError("subsample M exceeds the dataset size");
  if (!(options_.max_ips_weight > 1.0)) throw ConfigError("max_ips_weight must exceed 1");
  for (double p : propensity_) {
    if (!(p > 0.0 && p <= 1.0)) throw DataError("logged propensities must lie in (0, 1]");
  }
}

std::vector<std::size_t> SpvaeEstimator::sample_rows(std::span<const double> x) const {
  const std::size_t n = data_->size();
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (options_.subsample == 0 || options_.subsample == n) return rows;
  Rng rng(mix_seed(options_.seed, hash_values(x)));
  for (std::size_t i = 0; i < options_.subsample; ++i) std::swap(rows[i], rows[i + uniform_index(rng, n - i)]);
  rows.resize(options_.subsample);
  std::sort(rows.begin(), rows.end());
  return rows;
}

Vector SpvaeEstimator::weights(std::span<const double> x, std::span<const std::size_t> rows) const {
  Vector logw(rows.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    logw[k] = densities_->log_density(x, rows[k]);
    top = std::max(top, logw[k]);
  }
  if (!std::isfinite(top)) {
    throw EstimationError("all similarity densities underflow for this query (no logged row resembles it)");
  }
  for (double& v : logw) v = std::exp(v - top);
  const double total = pairwise_sum(logw);
  for (double& v : logw) v /= total;
  return logw;
}

namespace {

double ess_of(std::span<const double> w) {
  double sq = 0.0;
  for (double v : w) sq += v * v;
  return sq > 0.0 ? 1.0 / sq : 0.0;
}

}  // namespace

std::vector<ThetaEstimate> SpvaeEstimator::theta_all(std::span<const double> x) const {
  const auto rows = sample_rows(x);
  const Vector w = weights(x, rows);
  const std::size_t na = data_->num_actions;
  std::vector<ThetaEstimate> out(na);
  std::vector<Vector> terms(na);
  std::vector<bool> seen(na, false);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = rows[k];
    const std::size_t a = data_->actions[i];
    if (w[k] > 0.0) seen[a] = true;
    const double ips = std::min(1.0 / propensity_[i], options_.max_ips_weight);
    terms[a].push_back(w[k] * data_->rewards[i] * ips);
  }
  const double ess = ess_of(w);
  for (std::size_t a = 0; a < na; ++a) {
    out[a].value = pairwise_sum(terms[a]);
    out[a].ess = ess;
    out[a].no_support = !seen[a];
  }
  return out;
}

ThetaEstimate SpvaeEstimator::theta(std::span<const double> x, std::size_t a) const {
  if (a >= data_->num_actions) throw ConfigError("action " + std::to_string(a) + " out of range");
  return theta_all(x)[a];
}

std::vector<ThetaEstimate> SpvaeEstimator::theta_matched_all(std::span<const double> x) const {
  const auto rows = sample_rows(x);
  const std::size_t na = data_->num_actions;
  std::vector<Vector> logw(na);
  std::vector<Vector> rewards(na);
  for (std::size_t i : rows) {
    const std::size_t a = data_->actions[i];
    logw[a].push_back(densities_->log_density(x, i));
    rewards[a].push_back(data_->rewards[i]);
  }
  std::vector<ThetaEstimate> out(na);
  for (std::size_t a = 0; a < na; ++a) {
    if (logw[a].empty()) {
      out[a].no_support = true;
      continue;
    }
    const double top = *std::max_element(logw[a].begin(), logw[a].end());
    if (!std::isfinite(top)) {
      out[a].no_support = true;
      continue;
    }
    for (double& v : logw[a]) v = std::exp(v - top);
    const double total = pairwise_sum(logw[a]);
    Vector terms(logw[a].size());
    for (std::size_t k = 0; k < terms.size(); ++k) {
      logw[a][k] /= total;
      terms[k] = logw[a][k] * rewards[a][k];
    }
    out[a].value = pairwise_sum(terms);
    out[a].ess = ess_of(logw[a]);
  }
  return out;
}

ThetaEstimate SpvaeEstimator::theta_matched(std::span<const double> x, std::size_t a) const {
  if (a >= data_->num_actions) throw ConfigError("action " + std::to_string(a) + " out of range");
  const auto all = theta_matched_all(x);
  if (all[a].no_support) {
    throw EstimationError("matched estimator: no logged row with action " + std::to_string(a) +
                          " has positive similarity");
  }
  return all[a];
}

double SpvaeEstimator::ips_weight_sum(std::span<const double> x, std::size_t a,
                                      std::span<const double> propensity) const {
  const auto rows = sample_rows(x);
  const Vector w = weights(x, rows);
  Vector terms;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = rows[k];
    if (data_->actions[i] == a) terms.push_back(w[k] / propensity[i]);
  }
  return pairwise_sum(terms);
}

double ips_weight_identity_check(std::size_t action, std::size_t n_trials,
                                 const std::function<IdentityTrial(std::size_t)>& make_trial) {
  if (n_trials == 0) throw ConfigError("identity check needs at least one trial");
  Vector sums(n_trials);
  for (std::size_t t = 0; t < n_trials; ++t) {
    const auto trial = make_trial(t);
    SpvaeOptions opts;
    opts.max_ips_weight = std::numeric_limits<double>::infinity();
    const SpvaeEstimator est(trial.data, *trial.densities, trial.true_propensity, opts);
    sums[t] = est.ips_weight_sum(trial.query, action, trial.true_propensity);
  }
  return pairwise_sum(sums) / static_cast<double>(n_trials);
}

}  // namespace conspol
