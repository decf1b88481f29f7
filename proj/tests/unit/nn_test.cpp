#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "conspol/nn/adam.hpp"
#include "conspol/nn/dense_net.hpp"
#include "conspol/nn/distributions.hpp"
#include "conspol/nn/gradcheck.hpp"

using namespace conspol;
using namespace conspol::nn;

namespace {

DenseNet single_layer(Matrix w, Vector b, Activation act) {
  return DenseNet({DenseLayer{std::move(w), std::move(b), act}});
}

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = standard_normal(rng);
  return v;
}

}  // namespace

TEST_CASE("forward: identity layer passes input through") {
  auto net = single_layer(Matrix(2, 2, {1, 0, 0, 1}), {0, 0}, Activation::Identity);
  CHECK(forward(net, Vector{1, 2}).output == Vector{1, 2});
}

TEST_CASE("forward: relu clips negatives") {
  auto net = single_layer(Matrix(1, 1, {-1}), {0}, Activation::Relu);
  CHECK(forward(net, Vector{3}).output == Vector{0});
}

TEST_CASE("forward: 3-4-2 net matches straight-line evaluator") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const std::vector<std::size_t> w{3, 4, 2};
    auto net = DenseNet::create(w, Activation::Relu, Activation::Identity, rng);
    for (auto& layer : net.mutable_layers()) {
      for (double& b : layer.bias) b = standard_normal(rng);
    }
    const Vector x = random_vector(3, rng);
    const Vector got = forward(net, x).output;
    const Vector want = oracle::dense_eval(net, x);
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
  }
}

TEST_CASE("forward: deterministic and shape-checked") {
  Rng rng(3);
  const std::vector<std::size_t> w{3, 5, 2};
  auto net = DenseNet::create(w, Activation::Relu, Activation::Identity, rng);
  const Vector x{0.3, -1.2, 2.0};
  CHECK(forward(net, x).output == forward(net, x).output);
  CHECK_THROWS_AS(forward(net, Vector{1.0, 2.0}), ShapeError);
}

TEST_CASE("backward: linear layer product rule") {
  auto net = single_layer(Matrix(1, 1, {2.0}), {0}, Activation::Identity);
  auto fr = forward(net, Vector{3});
  auto br = backward(net, fr.cache, Vector{1});
  CHECK(br.param_grads.weight[0](0, 0) == doctest::Approx(3.0));
  CHECK(br.grad_input[0] == doctest::Approx(2.0));
}

TEST_CASE("backward: zero output gradient gives zero gradients") {
  Rng rng(1);
  const std::vector<std::size_t> w{3, 4, 2};
  auto net = DenseNet::create(w, Activation::Relu, Activation::Identity, rng);
  auto fr = forward(net, Vector{1, -1, 0.5});
  auto br = backward(net, fr.cache, Vector{0, 0});
  for (auto& b : br.param_grads.blocks("g")) {
    for (double v : b.values) CHECK(v == 0.0);
  }
  for (double v : br.grad_input) CHECK(v == 0.0);
}

TEST_CASE("backward: matches finite differences on 20 seeded nets") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::vector<std::size_t> w{2 + seed % 3, 5, 4, 1 + seed % 4};
    auto net = DenseNet::create(w, Activation::Relu, Activation::Identity, rng);
    for (auto& layer : net.mutable_layers()) {
      for (double& b : layer.bias) b = 0.1 * standard_normal(rng);
    }
    const Vector x = random_vector(w.front(), rng);
    const Vector c = random_vector(w.back(), rng);
    // loss = c . out + 0.5 |out|^2
    auto loss = [&] {
      const Vector out = forward_output(net, x);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += c[i] * out[i] + 0.5 * out[i] * out[i];
      return s;
    };
    auto fr = forward(net, x);
    Vector g(c.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = c[i] + fr.output[i];
    auto br = backward(net, fr.cache, g);
    auto report = check_gradients(net.parameters("net"), br.param_grads.blocks("net"), loss);
    INFO("seed " << seed << " worst " << report.worst << " err " << report.max_relative_error);
    CHECK(report.ok());
    CHECK(report.nondifferentiable * 10 < report.checked);
  }
}

TEST_CASE("adam: converges on w^2") {
  Vector w{5.0};
  Vector g{0.0};
  AdamState state;
  state.learning_rate = 0.1;
  for (int i = 0; i < 500; ++i) {
    g[0] = 2.0 * w[0];
    adam_step({{"w", w}}, {{"w", g}}, state);
  }
  CHECK(std::abs(w[0]) < 1e-3);
  CHECK(state.step == 500);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Vector w{1.5, -2.0};
  Vector g{0.0, 0.0};
  AdamState state;
  for (int i = 0; i < 50; ++i) adam_step({{"w", w}}, {{"w", g}}, state);
  CHECK(w == Vector{1.5, -2.0});
}

TEST_CASE("adam: first step magnitude is the learning rate for any gradient scale") {
  for (double scale : {1e-3, 1.0, 1e4}) {
    Vector w{0.0};
    Vector g{scale};
    AdamState state;
    adam_step({{"w", w}}, {{"w", g}}, state);
    // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps)
    const double expected = -1e-3 * scale / (scale + 1e-8);
    CHECK(w[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("adam: non-finite gradient names the parameter") {
  Vector w{1.0, 2.0};
  Vector g{0.0, std::nan("")};
  AdamState state;
  try {
    adam_step({{"decoder.layer0.bias", w}}, {{"decoder.layer0.bias", g}}, state);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("decoder.layer0.bias[1]") != std::string::npos);
  }
}

TEST_CASE("distributions: log densities") {
  CHECK(gaussian_log_pdf(0, 0, 1) == doctest::Approx(-0.918938533).epsilon(1e-9));
  CHECK(gaussian_log_pdf(1.3, -0.2, 0.7) == doctest::Approx(oracle::normal_log_pdf(1.3, -0.2, 0.7)));
  CHECK_THROWS_AS(gaussian_log_pdf(0, 0, 0), DomainError);
  CHECK_THROWS_AS(gaussian_log_pdf(0, 0, -1), DomainError);
  for (std::size_t m : {2u, 5u, 10u}) {
    const Vector logits(m, 0.37);
    CHECK(categorical_log_pmf(0, logits) == doctest::Approx(-std::log(static_cast<double>(m))));
  }
  const double big = categorical_log_pmf(0, Vector{1000, 0});
  CHECK(std::isfinite(big));
  CHECK(std::abs(big - (-std::log1p(std::exp(-1000.0)))) < 1e-15);
}

TEST_CASE("distributions: softmax normalized and positive") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Vector logits = random_vector(7, rng);
    for (double& v : logits) v *= 30.0;
    const Vector p = softmax(logits);
    double s = 0.0;
    for (double v : p) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("distributions: KL to standard normal") {
  CHECK(kl_to_standard_normal(Vector{0, 0}, Vector{0, 0}) == 0.0);
  CHECK(kl_to_standard_normal(Vector{1}, Vector{0}) == doctest::Approx(0.5));
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector mu = random_vector(3, rng);
    const Vector lv = random_vector(3, rng);
    CHECK(kl_to_standard_normal(mu, lv) >= 0.0);
  }
}

TEST_CASE("distributions: KL matches Monte-Carlo estimate") {
  Rng rng(11);
  const Vector mu{0.4, -0.7};
  const Vector lv{-0.3, 0.5};
  const int n = 1000000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double lq = 0.0;
    double lp = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      const double s = std::exp(0.5 * lv[k]);
      const double z = mu[k] + s * standard_normal(rng);
      lq += oracle::normal_log_pdf(z, mu[k], s);
      lp += oracle::normal_log_pdf(z, 0.0, 1.0);
    }
    acc += lq - lp;
  }
  CHECK(std::abs(acc / n - kl_to_standard_normal(mu, lv)) < 0.01);
}

TEST_CASE("serialization: DenseNet round trip") {
  Rng rng(2);
  const std::vector<std::size_t> w{3, 4, 2};
  auto net = DenseNet::create(w, Activation::Relu, Activation::Identity, rng);
  nlohmann::json j = net;
  CHECK(j.dump().find("relu") != std::string::npos);
  const auto back = j.get<DenseNet>();
  CHECK(back == net);
}
