#pragma once

#include "json.hpp"
#include <span>
#include <string>
#include <vector>

#include "conspol/common.hpp"
#include "conspol/nn/matrix.hpp"
#include "conspol/nn/params.hpp"

namespace conspol::nn {

enum class Activation { Identity, Relu };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Identity;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fully connected feed-forward network. Immutable during inference:
/// forward/backward are free functions over a const net.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  /// widths = {in, hidden..., out}. Hidden layers use `hidden`, the last
  /// layer uses `output`. Weights are Glorot-uniform, biases zero.
  static DenseNet create(std::span<const std::size_t> widths, Activation hidden, Activation output,
                         Rng& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  ParamList parameters(const std::string& prefix);
  bool all_finite() const;

  friend bool operator==(const DenseNet&, const DenseNet&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Per-layer values retained by forward for the backward pass.
struct ForwardCache {
  std::vector<Vector> inputs;      // input to each layer
  std::vector<Vector> preactivations;
};

struct ForwardResult {
  Vector output;
  ForwardCache cache;
};

/// Gradient buffers shaped like a DenseNet's parameters.
struct NetGradient {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static NetGradient zeros_like(const DenseNet& net);
  void zero();
  ParamList blocks(const std::string& prefix);
};

struct BackwardResult {
  NetGradient param_grads;
  Vector grad_input;
};

ForwardResult forward(const DenseNet& net, std::span<const double> input);
/// Inference-only forward pass (no cache).
Vector forward_output(const DenseNet& net, std::span<const double> input);

/// Exact reverse-mode gradients of a scalar loss whose gradient w.r.t. the
/// network output is grad_output.
BackwardResult backward(const DenseNet& net, const ForwardCache& cache,
                        std::span<const double> grad_output);
/// Same as backward but accumulates parameter gradients into `accum`.
Vector backward_accumulate(const DenseNet& net, const ForwardCache& cache,
                           std::span<const double> grad_output, NetGradient& accum);

void to_json(nlohmann::json& j, const DenseNet& net);
void from_json(const nlohmann::json& j, DenseNet& net);

}  // namespace conspol::nn
