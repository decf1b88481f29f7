#include "conspol/limits/info_limits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace conspol {

std::size_t DiscreteEnv::num_states() const {
  std::size_t n = 1;
  for (std::size_t c : cardinalities) n *= c;
  return n;
}

std::vector<std::size_t> DiscreteEnv::state(std::size_t index) const {
  std::vector<std::size_t> x(cardinalities.size());
  for (std::size_t j = cardinalities.size(); j-- > 0;) {
    x[j] = index % cardinalities[j];
    index /= cardinalities[j];
  }
  return x;
}

void DiscreteEnv::validate() const {
  if (cardinalities.empty()) throw ConfigError("environment needs at least one attribute");
  for (std::size_t c : cardinalities) {
    if (c < 1) throw ConfigError("attribute cardinality must be >= 1");
  }
  const std::size_t n = num_states();
  if (prior.size() != n) {
    throw ConfigError("prior has " + std::to_string(prior.size()) + " entries; expected " + std::to_string(n));
  }
  double total = 0.0;
  for (double p : prior) {
    if (!(p >= 0.0)) throw ConfigError("prior entries must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("prior must sum to 1");
  if (theta.rows() != n || theta.cols() == 0) throw ConfigError("theta must have one row per state");
  if (!theta.all_finite()) throw ConfigError("theta entries must be finite");
  if (channel) {
    if (channel->rows() != n) throw ConfigError("channel must have one row per state");
    for (std::size_t x = 0; x < n; ++x) {
      double s = 0.0;
      for (double v : channel->row(x)) {
        if (!(v >= 0.0)) throw ConfigError("channel entries must be nonnegative");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ConfigError("channel row " + std::to_string(x) + " must sum to 1");
    }
  } else {
    if (erasure.size() != cardinalities.size()) throw ConfigError("one erasure probability per attribute is required");
    for (double r : erasure) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("erasure probabilities must lie in [0, 1]");
    }
  }
}

DiscreteEnv DiscreteEnv::four_bit() {
  DiscreteEnv env;
  env.cardinalities = {2, 2, 2, 2};
  env.prior.assign(16, 1.0 / 16.0);
  env.erasure.assign(4, 0.5);
  env.theta = nn::Matrix(16, 2);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto x = env.state(i);
    env.theta(i, 0) = static_cast<double>(x[0] + x[1]) / 3.0;
    env.theta(i, 1) = static_cast<double>(x[2] + x[3]) / 3.0 + 0.1;
  }
  return env;
}

void to_json(nlohmann::json& j, const DiscreteEnv& env) {
  j = {{"cardinalities", env.cardinalities}, {"prior", env.prior}, {"theta", env.theta},
       {"max_pairs", env.max_pairs}};
  if (env.channel) j["channel"] = *env.channel;
  else j["erasure"] = env.erasure;
}

void from_json(const nlohmann::json& j, DiscreteEnv& env) {
  DiscreteEnv out;
  out.cardinalities = j.at("cardinalities").get<std::vector<std::size_t>>();
  const std::size_t n = out.num_states();
  if (j.contains("prior")) out.prior = j.at("prior").get<Vector>();
  else out.prior.assign(n, 1.0 / static_cast<double>(n));
  out.theta = j.at("theta").get<nn::Matrix>();
  if (j.contains("channel")) {
    out.channel = j.at("channel").get<nn::Matrix>();
  } else if (j.contains("erasure")) {
    const auto& e = j.at("erasure");
    out.erasure = e.is_array() ? e.get<Vector>() : Vector(out.cardinalities.size(), e.get<double>());
  } else {
    throw ConfigError("environment needs an 'erasure' rate or a 'channel' table");
  }
  out.max_pairs = j.value("max_pairs", out.max_pairs);
  out.validate();
  env = std::move(out);
}

std::vector<std::size_t> best_action_map(const DiscreteEnv& env) {
  std::vector<std::size_t> a(env.theta.rows());
  for (std::size_t x = 0; x < a.size(); ++x) a[x] = argmax_lowest(env.theta.row(x));
  return a;
}

namespace {

/// One (x, y) pair with positive probability.
struct Pair {
  std::size_t x;
  std::uint64_t y;
  double p_y_given_x;
};

std::vector<Pair> enumerate_pairs(const DiscreteEnv& env) {
  env.validate();
  const std::size_t n = env.num_states();
  const std::size_t d = env.cardinalities.size();
  std::vector<Pair> pairs;
  if (env.channel) {
    if (n * env.channel->cols() > env.max_pairs) {
      throw CapacityError("enumeration needs " + std::to_string(n * env.channel->cols()) +
                          " (x, y) pairs; budget is " + std::to_string(env.max_pairs));
    }
    for (std::size_t x = 0; x < n; ++x) {
      if (env.prior[x] == 0.0) continue;
      for (std::size_t y = 0; y < env.channel->cols(); ++y) {
        const double p = (*env.channel)(x, y);
        if (p > 0.0) pairs.push_back({x, y, p});
      }
    }
    return pairs;
  }
  if (d >= 63) throw CapacityError("too many attributes to enumerate erasure masks");
  const std::size_t masks = std::size_t{1} << d;
  if (n > env.max_pairs / masks) {
    throw CapacityError("enumeration needs " + std::to_string(n) + " x " + std::to_string(masks) +
                        " (x, mask) pairs; budget is " + std::to_string(env.max_pairs));
  }
  for (std::size_t x = 0; x < n; ++x) {
    if (env.prior[x] == 0.0) continue;
    const auto xs = env.state(x);
    for (std::size_t m = 0; m < masks; ++m) {
      double p = 1.0;
      std::uint64_t y = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const bool erased = (m >> (d - 1 - j)) & 1U;
        p *= erased ? env.erasure[j] : 1.0 - env.erasure[j];
        // Observed symbol: value, or cardinality as the erasure marker.
        y = y * (env.cardinalities[j] + 1) + (erased ? env.cardinalities[j] : xs[j]);
      }
      if (p > 0.0) pairs.push_back({x, y, p});
    }
  }
  return pairs;
}

double plogp_bits(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

double entropy_bits(std::span<const double> probs) {
  Vector terms;
  for (double p : probs) terms.push_back(-plogp_bits(p));
  return pairwise_sum(terms);
}

}  // namespace

Decomposition decomposition(const DiscreteEnv& env) {
  const auto pairs = enumerate_pairs(env);
  const auto best = best_action_map(env);
  const std::size_t na = env.num_actions();

  Vector p_a(na, 0.0);
  {
    std::vector<Vector> parts(na);
    for (std::size_t x = 0; x < best.size(); ++x) parts[best[x]].push_back(env.prior[x]);
    for (std::size_t a = 0; a < na; ++a) p_a[a] = pairwise_sum(parts[a]);
  }

  // Marginals p(y) and joints p(a, y), each summed pairwise in a fixed order.
  std::map<std::uint64_t, Vector> y_terms;
  std::map<std::pair<std::size_t, std::uint64_t>, Vector> ay_terms;
  for (const auto& pr : pairs) {
    const double joint = env.prior[pr.x] * pr.p_y_given_x;
    y_terms[pr.y].push_back(joint);
    ay_terms[{best[pr.x], pr.y}].push_back(joint);
  }
  std::map<std::uint64_t, double> p_y;
  for (const auto& [y, t] : y_terms) p_y[y] = pairwise_sum(t);
  std::map<std::pair<std::size_t, std::uint64_t>, double> p_ay;
  for (const auto& [key, t] : ay_terms) p_ay[key] = pairwise_sum(t);

  Decomposition d;
  d.h_a = entropy_bits(p_a);

  // I(X; X~) = sum p(x) p(y|x) log p(y|x) / p(y)
  Vector i_terms;
  Vector ic_terms;
  for (const auto& pr : pairs) {
    const double joint = env.prior[pr.x] * pr.p_y_given_x;
    i_terms.push_back(joint * std::log2(pr.p_y_given_x / p_y.at(pr.y)));
    // p(y | a) = p(a, y) / p(a)
    const std::size_t a = best[pr.x];
    const double p_y_given_a = p_ay.at({a, pr.y}) / p_a[a];
    ic_terms.push_back(joint * std::log2(pr.p_y_given_x / p_y_given_a));
  }
  d.i_xxt = pairwise_sum(i_terms);
  d.i_cond = pairwise_sum(ic_terms);

  // H(a | X~) = -sum p(a, y) log p(a, y) / p(y)
  Vector h_terms;
  Vector iay_terms;
  for (const auto& [key, joint] : p_ay) {
    if (joint <= 0.0) continue;
    const double py = p_y.at(key.second);
    h_terms.push_back(-joint * std::log2(joint / py));
    iay_terms.push_back(joint * std::log2(joint / (py * p_a[key.first])));
  }
  d.h_cond_direct = pairwise_sum(h_terms);
  d.i_a_xt = pairwise_sum(iay_terms);
  d.h_cond_prop1 = d.h_a - (d.i_xxt - d.i_cond);
  return d;
}

double heuristic_accuracy(const Decomposition& d) { return std::exp2(-d.h_cond_direct); }

double bayes_accuracy(const DiscreteEnv& env) {
  const auto pairs = enumerate_pairs(env);
  const auto best = best_action_map(env);
  const std::size_t na = env.num_actions();
  std::map<std::uint64_t, std::vector<Vector>> terms;
  for (const auto& pr : pairs) {
    auto& t = terms[pr.y];
    if (t.empty()) t.resize(na);
    t[best[pr.x]].push_back(env.prior[pr.x] * pr.p_y_given_x);
  }
  Vector correct;
  for (const auto& [y, per_action] : terms) {
    double top = 0.0;
    for (const auto& v : per_action) top = std::max(top, pairwise_sum(v));
    correct.push_back(top);
  }
  return pairwise_sum(correct);
}

}  // namespace conspol
