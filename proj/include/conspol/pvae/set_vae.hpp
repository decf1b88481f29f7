#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "conspol/common.hpp"
#include "conspol/nn/dense_net.hpp"
#include "conspol/nn/params.hpp"
#include "conspol/pvae/feature.hpp"

namespace conspol {

/// Layer widths of the set encoder (embeddings, h, f) and decoder.
struct NetworkDims {
  std::size_t embedding_dim = 10;
  std::vector<std::size_t> h_hidden;  // empty: h is a single ReLU layer
  std::size_t set_dim = 20;           // output width of h (K)
  std::vector<std::size_t> f_hidden{20, 20, 20};
  std::size_t latent_dim = 10;
  std::vector<std::size_t> decoder_hidden{20, 20};
};

void to_json(nlohmann::json& j, const NetworkDims& d);
void from_json(const nlohmann::json& j, NetworkDims& d);

struct PosteriorGaussian {
  Vector mu;
  Vector logvar;
};

/// Decoder distribution parameters in normalized units: continuous
/// attributes as (mean, sigma) of the standardized value, categorical
/// attributes as probability vectors.
struct HeadParams {
  Vector mean;
  Vector sigma;
  std::vector<Vector> probs;
};

inline constexpr double kSigmaFloor = 1e-3;

/// Set-encoder VAE over a list of attributes, optionally conditioned on an
/// extra vector (a one-hot action for the conditional model) that is
/// appended to the aggregated set code before f and to z before the decoder.
///
/// Encoder: s_j = v_j * e_j for each observed j, g = sum_j h(s_j),
/// (mu, logvar) = f(g ++ c). Decoder: heads = dec(z ++ c). Categorical
/// probabilities are softmax(-s) over the raw decoder outputs s; continuous
/// sigma = softplus(raw) + kSigmaFloor.
class SetVae {
 public:
  SetVae() = default;
  SetVae(std::vector<AttributeKind> attributes, std::size_t condition_dim, const NetworkDims& dims,
         Rng& rng);

  const std::vector<AttributeKind>& attributes() const { return attributes_; }
  std::size_t attribute_count() const { return attributes_.size(); }
  std::size_t condition_dim() const { return condition_dim_; }
  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t set_dim() const { return h_.output_dim(); }

  /// Scalar fed to the encoder for attribute j: the standardized value for
  /// continuous attributes, (index + 1) / m for categorical ones.
  double encoder_input(std::size_t j, double value) const;
  /// Decoder-side target: standardized value or category index.
  double target_value(std::size_t j, double value) const;

  /// g = sum over observed attributes of h(v_j * e_j); zero when none observed.
  Vector aggregate(std::span<const double> encoder_values, std::span<const std::uint8_t> missing) const;
  PosteriorGaussian encode_aggregate(std::span<const double> aggregate,
                                     std::span<const double> condition) const;
  PosteriorGaussian encode(std::span<const double> encoder_values, std::span<const std::uint8_t> missing,
                           std::span<const double> condition) const;
  HeadParams decode(std::span<const double> z, std::span<const double> condition) const;

  /// log p(target_j | heads) in normalized units.
  double log_likelihood(const HeadParams& heads, std::size_t j, double target) const;

  struct TrainingSample {
    Vector encoder_values;
    std::vector<std::uint8_t> encoder_missing;
    Vector targets;
    std::vector<std::uint8_t> scored;  // 1 = contributes to the reconstruction term
    Vector condition;
    double weight = 1.0;
  };

  struct Gradient {
    nn::Matrix embeddings;
    nn::NetGradient h;
    nn::NetGradient f;
    nn::NetGradient decoder;

    static Gradient zeros_like(const SetVae& vae);
    void zero();
    void scale(double factor);
    nn::ParamList blocks();
  };

  struct LossTerms {
    double loss = 0.0;            // weight * (-mean reconstruction + kl)
    double reconstruction = 0.0;  // mean over noise draws
    double kl = 0.0;
  };

  /// Weighted negative ELBO for one sample with explicit reparameterization
  /// noise (one vector of latent_dim per Monte-Carlo draw). When `grad` is
  /// non-null the exact parameter gradient is accumulated into it.
  LossTerms loss(const TrainingSample& sample, std::span<const Vector> noise, Gradient* grad) const;

  nn::ParamList parameters();
  bool all_finite() const;

  const nn::Matrix& embeddings() const { return embeddings_; }
  const nn::DenseNet& h_net() const { return h_; }
  const nn::DenseNet& f_net() const { return f_; }
  const nn::DenseNet& decoder_net() const { return decoder_; }

  friend bool operator==(const SetVae&, const SetVae&) = default;
  friend void to_json(nlohmann::json& j, const SetVae& v);
  friend void from_json(const nlohmann::json& j, SetVae& v);

 private:
  void build_offsets();
  Vector concat(std::span<const double> a, std::span<const double> b) const;

  std::vector<AttributeKind> attributes_;
  std::size_t condition_dim_ = 0;
  std::size_t latent_dim_ = 0;
  nn::Matrix embeddings_;  // attributes x embedding_dim
  nn::DenseNet h_;
  nn::DenseNet f_;
  nn::DenseNet decoder_;
  std::vector<std::size_t> head_offset_;
};

/// Mini-batch Adam on the mean weighted negative ELBO.
struct OptimizerConfig {
  std::size_t epochs = 25;
  std::size_t batch = 8;
  double learning_rate = 1e-3;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t mc_samples = 1;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

/// Encoder-side dropout of one attribute (e.g. the reward pseudo-attribute);
/// the attribute stays in the reconstruction term.
struct EncoderDropout {
  std::size_t attribute = 0;
  double rate = 0.0;
};

/// Trains in place. Returns the mean loss trace: entry 0 is the loss of the
/// initial parameters, entry e the running mean over epoch e.
/// `context` prefixes TrainingError messages.
std::vector<double> train_set_vae(SetVae& vae, std::span<const SetVae::TrainingSample> samples,
                                  const OptimizerConfig& config, const std::string& context,
                                  std::optional<EncoderDropout> dropout = std::nullopt);

}  // namespace conspol
