#include "conspol/nn/dense_net.hpp"

#include <algorithm>
#include <cmath>
#include "json.hpp"

namespace conspol::nn {

namespace {

std::string dims(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

}  // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + " bias/weight rows: " +
                       dims(layer.bias.size(), layer.weight.rows()));
    }
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + " input width does not chain: " +
                       dims(layer.weight.cols(), layers_[l - 1].weight.rows()));
    }
  }
}

DenseNet DenseNet::create(std::span<const std::size_t> widths, Activation hidden, Activation output,
                          Rng& rng) {
  if (widths.size() < 2) throw ConfigError("DenseNet needs at least input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    if (in == 0 || out == 0) throw ConfigError("DenseNet widths must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> init(-limit, limit);
    DenseLayer layer;
    layer.weight = Matrix(out, in);
    for (double& w : layer.weight.data()) w = init(rng);
    layer.bias.assign(out, 0.0);
    layer.activation = (l + 2 == widths.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

std::size_t DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }

std::size_t DenseNet::output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }

ParamList DenseNet::parameters(const std::string& prefix) {
  ParamList out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    out.push_back({prefix + ".layer" + std::to_string(l) + ".weight", layers_[l].weight.data()});
    out.push_back({prefix + ".layer" + std::to_string(l) + ".bias", layers_[l].bias});
  }
  return out;
}

bool DenseNet::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.weight.all_finite()) return false;
    for (double b : layer.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

NetGradient NetGradient::zeros_like(const DenseNet& net) {
  NetGradient g;
  for (const auto& layer : net.layers()) {
    g.weight.emplace_back(layer.weight.rows(), layer.weight.cols());
    g.bias.emplace_back(layer.bias.size(), 0.0);
  }
  return g;
}

void NetGradient::zero() {
  for (auto& w : weight) w.fill(0.0);
  for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

ParamList NetGradient::blocks(const std::string& prefix) {
  ParamList out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.push_back({prefix + ".layer" + std::to_string(l) + ".weight", weight[l].data()});
    out.push_back({prefix + ".layer" + std::to_string(l) + ".bias", bias[l]});
  }
  return out;
}

ForwardResult forward(const DenseNet& net, std::span<const double> input) {
  if (net.empty()) throw ShapeError("forward on an empty network");
  if (input.size() != net.input_dim()) {
    throw ShapeError("forward input width: " + dims(input.size(), net.input_dim()));
  }
  ForwardResult result;
  result.cache.inputs.reserve(net.depth());
  result.cache.preactivations.reserve(net.depth());
  Vector current(input.begin(), input.end());
  for (const auto& layer : net.layers()) {
    Vector pre(layer.weight.rows());
    matvec(layer.weight, current, pre);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += layer.bias[i];
    Vector post = pre;
    if (layer.activation == Activation::Relu) {
      for (double& v : post) v = v > 0.0 ? v : 0.0;
    }
    result.cache.inputs.push_back(std::move(current));
    result.cache.preactivations.push_back(std::move(pre));
    current = std::move(post);
  }
  result.output = std::move(current);
  return result;
}

Vector forward_output(const DenseNet& net, std::span<const double> input) {
  if (net.empty()) throw ShapeError("forward on an empty network");
  if (input.size() != net.input_dim()) {
    throw ShapeError("forward input width: " + dims(input.size(), net.input_dim()));
  }
  Vector current(input.begin(), input.end());
  Vector next;
  for (const auto& layer : net.layers()) {
    next.assign(layer.weight.rows(), 0.0);
    matvec(layer.weight, current, next);
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] += layer.bias[i];
      if (layer.activation == Activation::Relu && next[i] < 0.0) next[i] = 0.0;
    }
    std::swap(current, next);
  }
  return current;
}

Vector backward_accumulate(const DenseNet& net, const ForwardCache& cache,
                           std::span<const double> grad_output, NetGradient& accum) {
  const auto& layers = net.layers();
  if (cache.inputs.size() != layers.size() || cache.preactivations.size() != layers.size()) {
    throw ShapeError("backward cache depth: " + dims(cache.inputs.size(), layers.size()));
  }
  if (accum.weight.size() != layers.size()) {
    throw ShapeError("backward gradient depth: " + dims(accum.weight.size(), layers.size()));
  }
  if (grad_output.size() != net.output_dim()) {
    throw ShapeError("backward grad_output width: " + dims(grad_output.size(), net.output_dim()));
  }
  Vector delta(grad_output.begin(), grad_output.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const auto& pre = cache.preactivations[l];
    const auto& in = cache.inputs[l];
    if (pre.size() != layer.weight.rows() || in.size() != layer.weight.cols()) {
      throw ShapeError("backward cache/net mismatch at layer " + std::to_string(l));
    }
    if (layer.activation == Activation::Relu) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (pre[i] <= 0.0) delta[i] = 0.0;
      }
    }
    outer_add(delta, in, accum.weight[l]);
    for (std::size_t i = 0; i < delta.size(); ++i) accum.bias[l][i] += delta[i];
    Vector grad_in(layer.weight.cols(), 0.0);
    matvec_transposed_add(layer.weight, delta, grad_in);
    delta = std::move(grad_in);
  }
  return delta;
}

BackwardResult backward(const DenseNet& net, const ForwardCache& cache,
                        std::span<const double> grad_output) {
  BackwardResult result;
  result.param_grads = NetGradient::zeros_like(net);
  result.grad_input = backward_accumulate(net, cache, grad_output, result.param_grads);
  return result;
}

void to_json(nlohmann::json& j, const Matrix& m) {
  j = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    j.push_back(std::vector<double>(row.begin(), row.end()));
  }
}

void from_json(const nlohmann::json& j, Matrix& m) {
  if (!j.is_array()) throw DataError("matrix must be a nested array");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& row : j) {
    if (row.size() != cols) throw DataError("ragged matrix rows");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  m = Matrix(rows, cols, std::move(data));
}

void to_json(nlohmann::json& j, const DenseNet& net) {
  j = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    nlohmann::json lj;
    lj["weight"] = layer.weight;
    lj["bias"] = layer.bias;
    lj["activation"] = layer.activation == Activation::Relu ? "relu" : "identity";
    j.push_back(std::move(lj));
  }
}

void from_json(const nlohmann::json& j, DenseNet& net) {
  std::vector<DenseLayer> layers;
  for (const auto& lj : j) {
    DenseLayer layer;
    layer.weight = lj.at("weight").get<Matrix>();
    layer.bias = lj.at("bias").get<Vector>();
    const auto act = lj.at("activation").get<std::string>();
    if (act == "relu") {
      layer.activation = Activation::Relu;
    } else if (act == "identity") {
      layer.activation = Activation::Identity;
    } else {
      throw DataError("unknown activation tag '" + act + "'");
    }
    layers.push_back(std::move(layer));
  }
  net = DenseNet(std::move(layers));
}

}  // namespace conspol::nn
