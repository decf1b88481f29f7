#include "conspol/bench/families.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "conspol/nn/distributions.hpp"

namespace conspol {
namespace {

void check_rate(double rate, const char* field) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError(std::string(field) + " must lie in [0, 1)");
}

nn::Matrix cholesky(const nn::Matrix& a) {
  const std::size_t n = a.rows();
  nn::Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0)) throw ConfigError("covariate correlation matrix is not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

Vector correlated_normal(const nn::Matrix& chol, Rng& rng) {
  const std::size_t n = chol.rows();
  Vector e(n), out(n, 0.0);
  for (double& v : e) v = standard_normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k <= i; ++k) out[i] += chol(i, k) * e[k];
  }
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

double glucose_reward(double cgm) {
  if (cgm <= 90.0) return (cgm - 80.0) / 10.0;
  if (cgm < 130.0) return 1.0;
  return (180.0 - cgm) / 50.0;
}

double expected_glucose_reward(double mean, double sd) {
  if (!(sd > 0.0)) return glucose_reward(mean);
  const double b = (90.0 - mean) / sd;
  const double a = (130.0 - mean) / sd;
  const double low = ((mean - 80.0) * normal_cdf(b) - sd * normal_pdf(b)) / 10.0;
  const double mid = normal_cdf(a) - normal_cdf(b);
  const double tail = normal_cdf(-a);
  const double high = ((180.0 - mean) * tail - sd * normal_pdf(a)) / 50.0;
  return low + mid + high;
}

// ---------------------------------------------------------------- digit

DigitBanditEnv::DigitBanditEnv(DigitConfig config) : config_(config) {
  if (config_.classes < 2 || config_.classes % 2 != 0) throw ConfigError("classes must be even and at least 2");
  if (config_.dims == 0 || config_.rank == 0) throw ConfigError("dims and rank must be positive");
  if (!(config_.separation > 0.0) || !(config_.noise > 0.0) || !(config_.reward_sd >= 0.0)) {
    throw ConfigError("separation and noise must be positive, reward_sd non-negative");
  }
  check_rate(config_.erase_rate, "erase_rate");
  const double sd = std::sqrt(config_.separation * config_.separation + config_.noise * config_.noise);
  schema_ = FeatureSchema(std::vector<AttributeKind>(config_.dims, AttributeKind::continuous(0.0, sd)));
  Rng rng(mix_seed(config_.seed, 0x64696769ULL));
  centers_ = nn::Matrix(config_.classes, config_.dims);
  if (config_.layout == "line") {
    Vector direction(config_.dims);
    for (double& v : direction) v = standard_normal(rng);
    double norm = 0.0;
    for (double v : direction) norm += v * v;
    // Unit per-attribute scale on average, so spacing does not vary with the seed.
    const double scale = std::sqrt(static_cast<double>(config_.dims) / norm);
    for (double& v : direction) v *= scale;
    std::vector<std::size_t> order(config_.classes);
    for (std::size_t y = 0; y < order.size(); ++y) order[y] = y;
    std::shuffle(order.begin(), order.end(), rng);
    const double k = static_cast<double>(config_.classes);
    const double spread = std::sqrt((k * k - 1.0) / 12.0);  // sd of 0..k-1
    for (std::size_t y = 0; y < config_.classes; ++y) {
      const double pos = (static_cast<double>(order[y]) - 0.5 * (k - 1.0)) / spread;
      for (std::size_t j = 0; j < config_.dims; ++j) centers_(y, j) = config_.separation * direction[j] * pos;
    }
  } else if (config_.layout == "subspace") {
    const std::size_t r = config_.rank;
    nn::Matrix basis(config_.dims, r);
    for (double& v : basis.data()) v = standard_normal(rng) / std::sqrt(static_cast<double>(r));
    for (std::size_t y = 0; y < config_.classes; ++y) {
      Vector psi(r);
      for (double& v : psi) v = standard_normal(rng);
      for (std::size_t j = 0; j < config_.dims; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < r; ++c) s += basis(j, c) * psi[c];
        centers_(y, j) = config_.separation * s;
      }
    }
  } else {
    throw ConfigError("layout: unknown digit layout '" + config_.layout + "'");
  }
}

nlohmann::json DigitBanditEnv::config() const {
  nlohmann::json j = config_;
  j["family"] = family();
  return j;
}

Instance DigitBanditEnv::sample_instance(Rng& rng) const {
  Instance inst;
  inst.label = static_cast<int>(uniform_index(rng, config_.classes));
  inst.x.resize(config_.dims);
  const auto c = centers_.row(static_cast<std::size_t>(inst.label));
  for (std::size_t j = 0; j < config_.dims; ++j) inst.x[j] = c[j] + config_.noise * standard_normal(rng);
  return inst;
}

Vector DigitBanditEnv::logging_probs(const Instance& inst) const {
  const std::size_t k = config_.classes;
  const double light = 1.0 / (2.0 * static_cast<double>(k));
  const double heavy = 3.0 / (2.0 * static_cast<double>(k));
  const bool even = inst.label % 2 == 0;
  Vector p(k);
  for (std::size_t a = 0; a < k; ++a) {
    const bool low = a < k / 2;
    p[a] = (low == even) ? light : heavy;
  }
  return p;
}

Vector DigitBanditEnv::reward_means(const Instance& inst) const {
  Vector m(config_.classes);
  for (std::size_t a = 0; a < m.size(); ++a) m[a] = -std::abs(static_cast<double>(inst.label) - static_cast<double>(a));
  return m;
}

double DigitBanditEnv::sample_reward(const Instance& inst, std::size_t a, Rng& rng) const {
  return -std::abs(static_cast<double>(inst.label) - static_cast<double>(a)) + config_.reward_sd * standard_normal(rng);
}

// ---------------------------------------------------------------- IHDP-B

IhdpBEnv::IhdpBEnv(IhdpConfig config) : config_(config) {
  if (config_.continuous + config_.binary == 0) throw ConfigError("ihdp-b needs at least one covariate");
  check_rate(config_.erase_rate, "erase_rate");
  const std::size_t c = config_.continuous;
  std::vector<AttributeKind> attrs(c, AttributeKind::continuous(0.0, 1.0));
  for (std::size_t j = 0; j < config_.binary; ++j) attrs.push_back(AttributeKind::categorical(2));
  schema_ = FeatureSchema(std::move(attrs));
  if (c > 0) {
    nn::Matrix corr(c, c, config_.correlation);
    for (std::size_t i = 0; i < c; ++i) corr(i, i) = 1.0;
    chol_ = cholesky(corr);
  }
  Rng rng(mix_seed(config_.seed, 0x69686470ULL));
  binary_rate_.resize(config_.binary);
  for (double& p : binary_rate_) p = 0.2 + 0.6 * uniform01(rng);
  const std::size_t d = schema_.size();
  const Vector support{0.0, 0.1, 0.2, 0.3, 0.4};
  const Vector weights{0.6, 0.1, 0.1, 0.1, 0.1};
  beta_.resize(d);
  for (double& b : beta_) b = support[sample_categorical(rng, weights)];
  treat_weights_.resize(d);
  for (double& w : treat_weights_) w = standard_normal(rng);

  // Reference omega from a large sample so single-instance queries (used by
  // evaluation) have a sensible treated mean; generate() recalibrates.
  Rng ref(mix_seed(config_.seed, 0x6f6d6567ULL));
  const std::size_t n_ref = 20000;
  Vector diff(n_ref);
  for (std::size_t i = 0; i < n_ref; ++i) {
    const Instance inst = sample_instance(ref);
    diff[i] = linear(inst.x) - control_mean(inst.x);
  }
  omega_ = pairwise_sum(diff) / static_cast<double>(n_ref) - config_.tau;
}

nlohmann::json IhdpBEnv::config() const {
  nlohmann::json j = config_;
  j["family"] = family();
  return j;
}

Vector IhdpBEnv::outcome_covariates(const Feature& x) const {
  Vector v(x.begin(), x.end());
  for (std::size_t j = 0; j < config_.binary; ++j) v[config_.continuous + j] -= binary_rate_[j];
  return v;
}

double IhdpBEnv::linear(const Feature& x) const {
  const Vector v = outcome_covariates(x);
  double s = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) s += v[j] * beta_[j];
  return s;
}

double IhdpBEnv::control_mean(const Feature& x) const {
  const Vector v = outcome_covariates(x);
  double s = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) s += (v[j] + 0.5) * beta_[j];
  return std::exp(s);
}

Instance IhdpBEnv::sample_instance(Rng& rng) const {
  Instance inst;
  inst.x = config_.continuous > 0 ? correlated_normal(chol_, rng) : Vector{};
  for (std::size_t j = 0; j < config_.binary; ++j) inst.x.push_back(uniform01(rng) < binary_rate_[j] ? 1.0 : 0.0);
  return inst;
}

Vector IhdpBEnv::logging_probs(const Instance& inst) const {
  const Vector v = outcome_covariates(inst.x);
  double s = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) s += treat_weights_[j] * v[j];
  const double p1 = nn::sigmoid(config_.treatment_scale * s);
  return {1.0 - p1, p1};
}

Vector IhdpBEnv::reward_means(const Instance& inst) const {
  return {control_mean(inst.x), linear(inst.x) - omega_};
}

double IhdpBEnv::sample_reward(const Instance& inst, std::size_t a, Rng& rng) const {
  return reward_means(inst)[a] + standard_normal(rng);
}

LoggedDataset IhdpBEnv::generate(std::size_t n, std::uint64_t seed) const {
  if (n == 0) throw ConfigError("dataset size n must be at least 1");
  Rng feature_rng(mix_seed(seed, 1));
  Rng action_rng(mix_seed(seed, 2));
  Rng reward_rng(mix_seed(seed, 3));
  Rng mask_rng(mix_seed(seed, 4));

  std::vector<Instance> insts;
  insts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) insts.push_back(sample_instance(feature_rng));
  Vector mu0(n), lin(n), e0(n), e1(n), diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu0[i] = control_mean(insts[i].x);
    lin[i] = linear(insts[i].x);
    e0[i] = standard_normal(reward_rng);
    e1[i] = standard_normal(reward_rng);
    diff[i] = (lin[i] + e1[i]) - (mu0[i] + e0[i]);
  }
  // Realized R(1) - R(0) averages to tau exactly.
  const double omega = pairwise_sum(diff) / static_cast<double>(n) - config_.tau;

  LoggedDataset data;
  data.schema = schema_;
  data.num_actions = 2;
  GroundTruth truth;
  truth.reward_means = nn::Matrix(n, 2);
  truth.logging = nn::Matrix(n, 2);
  truth.potential_outcomes = nn::Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector probs = logging_probs(insts[i]);
    const std::size_t a = sample_categorical(action_rng, probs);
    truth.reward_means(i, 0) = mu0[i];
    truth.reward_means(i, 1) = lin[i] - omega;
    truth.potential_outcomes(i, 0) = mu0[i] + e0[i];
    truth.potential_outcomes(i, 1) = lin[i] - omega + e1[i];
    truth.logging(i, 0) = probs[0];
    truth.logging(i, 1) = probs[1];
    data.actions.push_back(a);
    data.rewards.push_back(truth.potential_outcomes(i, a));
    data.features.push_back(mask_mcar(insts[i].x, config_.erase_rate, mask_rng));
    truth.complete.push_back(insts[i].x);
    truth.labels.push_back(-1);
  }
  data.truth = std::move(truth);
  return data;
}

// ---------------------------------------------------------------- glucose

GlucoseEnv::GlucoseEnv(GlucoseConfig config) : config_(std::move(config)) {
  if (config_.dims == 0 || config_.doses < 2) throw ConfigError("glucose needs dims >= 1 and doses >= 2");
  if (config_.weights.size() != config_.dims) throw ConfigError("weights must have one entry per feature");
  if (!(config_.noise >= 0.0) || !(config_.clinician_temperature > 0.0)) {
    throw ConfigError("noise must be non-negative and clinician_temperature positive");
  }
  if (!(config_.uniform_share > 0.0 && config_.uniform_share <= 1.0)) {
    throw ConfigError("uniform_share must lie in (0, 1]");
  }
  if (!(std::abs(config_.correlation) < 1.0)) throw ConfigError("correlation must lie in (-1, 1)");
  check_rate(config_.erase_rate, "erase_rate");
  schema_ = FeatureSchema(std::vector<AttributeKind>(config_.dims, AttributeKind::continuous(0.0, 1.0)));
  nn::Matrix corr(config_.dims, config_.dims);
  for (std::size_t i = 0; i < config_.dims; ++i) {
    for (std::size_t j = 0; j < config_.dims; ++j) {
      corr(i, j) = std::pow(config_.correlation, static_cast<double>(i > j ? i - j : j - i));
    }
  }
  chol_ = cholesky(corr);
}

nlohmann::json GlucoseEnv::config() const {
  nlohmann::json j = config_;
  j["family"] = family();
  return j;
}

double GlucoseEnv::dose(std::size_t a) const {
  return static_cast<double>(a) / static_cast<double>(config_.doses - 1);
}

double GlucoseEnv::cgm_mean(const Feature& x, std::size_t a) const {
  double s = config_.intercept;
  for (std::size_t j = 0; j < config_.dims; ++j) s += config_.weights[j] * x[j];
  const double d = dose(a);
  return s + config_.dose_linear * d + config_.dose_quadratic * d * d;
}

Instance GlucoseEnv::sample_instance(Rng& rng) const { return {correlated_normal(chol_, rng), -1}; }

Vector GlucoseEnv::logging_probs(const Instance& inst) const {
  const Vector means = reward_means(inst);
  Vector logits(means.size());
  for (std::size_t a = 0; a < means.size(); ++a) logits[a] = means[a] / config_.clinician_temperature;
  const Vector clinician = nn::softmax(logits);
  const double k = static_cast<double>(config_.doses);
  Vector p(means.size());
  for (std::size_t a = 0; a < p.size(); ++a) {
    p[a] = (1.0 - config_.uniform_share) * clinician[a] + config_.uniform_share / k;
  }
  return p;
}

Vector GlucoseEnv::reward_means(const Instance& inst) const {
  Vector m(config_.doses);
  for (std::size_t a = 0; a < m.size(); ++a) m[a] = expected_glucose_reward(cgm_mean(inst.x, a), config_.noise);
  return m;
}

double GlucoseEnv::sample_reward(const Instance& inst, std::size_t a, Rng& rng) const {
  return glucose_reward(cgm_mean(inst.x, a) + config_.noise * standard_normal(rng));
}

// ---------------------------------------------------------------- binary table

BinaryTableEnv::BinaryTableEnv(BinaryTableConfig config) : config_(config) {
  if (config_.attributes == 0 || config_.attributes > 20) throw ConfigError("attributes must lie in [1, 20]");
  if (config_.actions == 0) throw ConfigError("actions must be positive");
  check_rate(config_.erase_rate, "erase_rate");
  schema_ = FeatureSchema(std::vector<AttributeKind>(config_.attributes, AttributeKind::categorical(2)));
  Rng rng(mix_seed(config_.seed, 0x74626c65ULL));
  theta_ = nn::Matrix(std::size_t{1} << config_.attributes, config_.actions);
  for (double& v : theta_.data()) v = uniform01(rng) - 0.5;
}

nlohmann::json BinaryTableEnv::config() const {
  nlohmann::json j = config_;
  j["family"] = family();
  return j;
}

std::size_t BinaryTableEnv::state_index(const Feature& x) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < config_.attributes; ++j) {
    if (x[j] != 0.0) s |= std::size_t{1} << j;
  }
  return s;
}

Feature BinaryTableEnv::state(std::size_t index) const {
  Feature x(config_.attributes);
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<double>((index >> j) & 1U);
  return x;
}

Instance BinaryTableEnv::sample_instance(Rng& rng) const {
  const std::size_t s = uniform_index(rng, num_states());
  return {state(s), static_cast<int>(s)};
}

Vector BinaryTableEnv::logging_probs(const Instance&) const {
  return Vector(config_.actions, 1.0 / static_cast<double>(config_.actions));
}

Vector BinaryTableEnv::reward_means(const Instance& inst) const {
  const auto r = theta_.row(state_index(inst.x));
  return Vector(r.begin(), r.end());
}

double BinaryTableEnv::sample_reward(const Instance& inst, std::size_t a, Rng& rng) const {
  return theta_(state_index(inst.x), a) + config_.reward_sd * standard_normal(rng);
}

// ---------------------------------------------------------------- json

void to_json(nlohmann::json& j, const DigitConfig& c) {
  j = {{"dims", c.dims},           {"classes", c.classes},       {"separation", c.separation},
       {"layout", c.layout},       {"rank", c.rank},          {"noise", c.noise},         {"reward_sd", c.reward_sd},   {"erase_rate", c.erase_rate},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DigitConfig& c) {
  DigitConfig o;
  o.dims = j.value("dims", o.dims);
  o.classes = j.value("classes", o.classes);
  o.separation = j.value("separation", o.separation);
  o.layout = j.value("layout", o.layout);
  o.rank = j.value("rank", o.rank);
  o.noise = j.value("noise", o.noise);
  o.reward_sd = j.value("reward_sd", o.reward_sd);
  o.erase_rate = j.value("erase_rate", o.erase_rate);
  o.seed = j.value("seed", o.seed);
  c = o;
}

void to_json(nlohmann::json& j, const IhdpConfig& c) {
  j = {{"continuous", c.continuous},
       {"binary", c.binary},
       {"correlation", c.correlation},
       {"tau", c.tau},
       {"treatment_scale", c.treatment_scale},
       {"erase_rate", c.erase_rate},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, IhdpConfig& c) {
  IhdpConfig o;
  o.continuous = j.value("continuous", o.continuous);
  o.binary = j.value("binary", o.binary);
  o.correlation = j.value("correlation", o.correlation);
  o.tau = j.value("tau", o.tau);
  o.treatment_scale = j.value("treatment_scale", o.treatment_scale);
  o.erase_rate = j.value("erase_rate", o.erase_rate);
  o.seed = j.value("seed", o.seed);
  c = o;
}

void to_json(nlohmann::json& j, const GlucoseConfig& c) {
  j = {{"dims", c.dims},
       {"doses", c.doses},
       {"correlation", c.correlation},
       {"weights", c.weights},
       {"intercept", c.intercept},
       {"dose_linear", c.dose_linear},
       {"dose_quadratic", c.dose_quadratic},
       {"noise", c.noise},
       {"clinician_temperature", c.clinician_temperature},
       {"uniform_share", c.uniform_share},
       {"erase_rate", c.erase_rate},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GlucoseConfig& c) {
  GlucoseConfig o;
  o.dims = j.value("dims", o.dims);
  o.doses = j.value("doses", o.doses);
  o.correlation = j.value("correlation", o.correlation);
  if (j.contains("weights")) {
    o.weights = j.at("weights").get<Vector>();
  } else if (o.dims != o.weights.size()) {
    throw ConfigError("weights: required when dims differs from the default");
  }
  o.intercept = j.value("intercept", o.intercept);
  o.dose_linear = j.value("dose_linear", o.dose_linear);
  o.dose_quadratic = j.value("dose_quadratic", o.dose_quadratic);
  o.noise = j.value("noise", o.noise);
  o.clinician_temperature = j.value("clinician_temperature", o.clinician_temperature);
  o.uniform_share = j.value("uniform_share", o.uniform_share);
  o.erase_rate = j.value("erase_rate", o.erase_rate);
  o.seed = j.value("seed", o.seed);
  c = o;
}

void to_json(nlohmann::json& j, const BinaryTableConfig& c) {
  j = {{"attributes", c.attributes},
       {"actions", c.actions},
       {"reward_sd", c.reward_sd},
       {"erase_rate", c.erase_rate},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BinaryTableConfig& c) {
  BinaryTableConfig o;
  o.attributes = j.value("attributes", o.attributes);
  o.actions = j.value("actions", o.actions);
  o.reward_sd = j.value("reward_sd", o.reward_sd);
  o.erase_rate = j.value("erase_rate", o.erase_rate);
  o.seed = j.value("seed", o.seed);
  c = o;
}

}  // namespace conspol
