#include "conspol/pvae/set_vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "conspol/nn/adam.hpp"
#include "conspol/nn/distributions.hpp"

namespace conspol {

void to_json(nlohmann::json& j, const NetworkDims& d) {
  j = {{"embedding_dim", d.embedding_dim}, {"h_hidden", d.h_hidden},     {"set_dim", d.set_dim},
       {"f_hidden", d.f_hidden},           {"latent_dim", d.latent_dim}, {"decoder_hidden", d.decoder_hidden}};
}

void from_json(const nlohmann::json& j, NetworkDims& d) {
  NetworkDims out;
  out.embedding_dim = j.value("embedding_dim", out.embedding_dim);
  out.h_hidden = j.value("h_hidden", out.h_hidden);
  out.set_dim = j.value("set_dim", out.set_dim);
  out.f_hidden = j.value("f_hidden", out.f_hidden);
  out.latent_dim = j.value("latent_dim", out.latent_dim);
  out.decoder_hidden = j.value("decoder_hidden", out.decoder_hidden);
  if (out.embedding_dim == 0 || out.set_dim == 0 || out.latent_dim == 0) {
    throw ConfigError("network dims: embedding_dim, set_dim and latent_dim must be positive");
  }
  auto positive = [](const std::vector<std::size_t>& w) {
    return std::all_of(w.begin(), w.end(), [](std::size_t v) { return v > 0; });
  };
  if (!positive(out.h_hidden) || !positive(out.f_hidden) || !positive(out.decoder_hidden)) {
    throw ConfigError("network dims: hidden widths must be positive");
  }
  d = std::move(out);
}

namespace {

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

SetVae::SetVae(std::vector<AttributeKind> attributes, std::size_t condition_dim, const NetworkDims& dims,
               Rng& rng)
    : attributes_(std::move(attributes)), condition_dim_(condition_dim), latent_dim_(dims.latent_dim) {
  if (attributes_.empty()) throw ConfigError("model needs at least one attribute");
  if (dims.embedding_dim == 0 || dims.set_dim == 0 || dims.latent_dim == 0) {
    throw ConfigError("network dims must be positive");
  }
  const std::size_t d = attributes_.size();
  embeddings_ = nn::Matrix(d, dims.embedding_dim);
  // Embeddings start as small Glorot-scaled values so attributes are distinguishable.
  const double limit = std::sqrt(6.0 / static_cast<double>(d + dims.embedding_dim));
  std::uniform_real_distribution<double> init(-limit, limit);
  for (double& v : embeddings_.data()) v = init(rng);

  h_ = nn::DenseNet::create(widths(dims.embedding_dim, dims.h_hidden, dims.set_dim), nn::Activation::Relu,
                            nn::Activation::Relu, rng);
  f_ = nn::DenseNet::create(widths(dims.set_dim + condition_dim, dims.f_hidden, 2 * dims.latent_dim),
                            nn::Activation::Relu, nn::Activation::Identity, rng);
  std::size_t head_total = 0;
  for (const auto& a : attributes_) head_total += a.head_width();
  decoder_ = nn::DenseNet::create(widths(dims.latent_dim + condition_dim, dims.decoder_hidden, head_total),
                                  nn::Activation::Relu, nn::Activation::Identity, rng);
  build_offsets();
}

void SetVae::build_offsets() {
  head_offset_.assign(attributes_.size(), 0);
  std::size_t off = 0;
  for (std::size_t j = 0; j < attributes_.size(); ++j) {
    head_offset_[j] = off;
    off += attributes_[j].head_width();
  }
  if (!decoder_.empty() && off != decoder_.output_dim()) {
    throw ShapeError("decoder output width " + std::to_string(decoder_.output_dim()) +
                     " does not match attribute heads " + std::to_string(off));
  }
}

double SetVae::encoder_input(std::size_t j, double value) const {
  const auto& a = attributes_[j];
  if (a.is_continuous()) return (value - a.mean) / a.std;
  return (value + 1.0) / static_cast<double>(a.cardinality);
}

double SetVae::target_value(std::size_t j, double value) const {
  const auto& a = attributes_[j];
  return a.is_continuous() ? (value - a.mean) / a.std : value;
}

Vector SetVae::concat(std::span<const double> a, std::span<const double> b) const {
  if (b.size() != condition_dim_) {
    throw ShapeError("condition has " + std::to_string(b.size()) + " entries; expected " +
                     std::to_string(condition_dim_));
  }
  Vector out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Vector SetVae::aggregate(std::span<const double> encoder_values, std::span<const std::uint8_t> missing) const {
  const std::size_t d = attributes_.size();
  if (encoder_values.size() != d || missing.size() != d) {
    throw ShapeError("encoder input has " + std::to_string(encoder_values.size()) + " values; expected " +
                     std::to_string(d));
  }
  Vector g(set_dim(), 0.0);
  Vector s(embeddings_.cols());
  for (std::size_t j = 0; j < d; ++j) {
    if (missing[j]) continue;
    const auto e = embeddings_.row(j);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = encoder_values[j] * e[k];
    const Vector hj = nn::forward_output(h_, s);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += hj[k];
  }
  return g;
}

PosteriorGaussian SetVae::encode_aggregate(std::span<const double> aggregate,
                                           std::span<const double> condition) const {
  const Vector out = nn::forward_output(f_, concat(aggregate, condition));
  PosteriorGaussian q;
  q.mu.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(latent_dim_));
  q.logvar.assign(out.begin() + static_cast<std::ptrdiff_t>(latent_dim_), out.end());
  return q;
}

PosteriorGaussian SetVae::encode(std::span<const double> encoder_values, std::span<const std::uint8_t> missing,
                                 std::span<const double> condition) const {
  return encode_aggregate(aggregate(encoder_values, missing), condition);
}

HeadParams SetVae::decode(std::span<const double> z, std::span<const double> condition) const {
  if (z.size() != latent_dim_) {
    throw ShapeError("latent has " + std::to_string(z.size()) + " entries; expected " +
                     std::to_string(latent_dim_));
  }
  const Vector raw = nn::forward_output(decoder_, concat(z, condition));
  const std::size_t d = attributes_.size();
  HeadParams heads;
  heads.mean.assign(d, 0.0);
  heads.sigma.assign(d, 0.0);
  heads.probs.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t o = head_offset_[j];
    if (attributes_[j].is_continuous()) {
      heads.mean[j] = raw[o];
      heads.sigma[j] = nn::softplus(raw[o + 1]) + kSigmaFloor;
    } else {
      Vector neg(attributes_[j].cardinality);
      for (std::size_t t = 0; t < neg.size(); ++t) neg[t] = -raw[o + t];
      heads.probs[j] = nn::softmax(neg);
    }
  }
  return heads;
}

double SetVae::log_likelihood(const HeadParams& heads, std::size_t j, double target) const {
  if (attributes_[j].is_continuous()) return nn::gaussian_log_pdf(target, heads.mean[j], heads.sigma[j]);
  const auto t = static_cast<std::size_t>(target);
  return std::log(heads.probs[j][t]);
}

SetVae::Gradient SetVae::Gradient::zeros_like(const SetVae& vae) {
  Gradient g;
  g.embeddings = nn::Matrix(vae.embeddings_.rows(), vae.embeddings_.cols());
  g.h = nn::NetGradient::zeros_like(vae.h_);
  g.f = nn::NetGradient::zeros_like(vae.f_);
  g.decoder = nn::NetGradient::zeros_like(vae.decoder_);
  return g;
}

void SetVae::Gradient::zero() {
  embeddings.fill(0.0);
  h.zero();
  f.zero();
  decoder.zero();
}

void SetVae::Gradient::scale(double factor) {
  for (auto block : blocks()) {
    for (double& v : block.values) v *= factor;
  }
}

nn::ParamList SetVae::Gradient::blocks() {
  nn::ParamList out{{"embeddings", embeddings.data()}};
  for (auto& b : h.blocks("h")) out.push_back(b);
  for (auto& b : f.blocks("f")) out.push_back(b);
  for (auto& b : decoder.blocks("decoder")) out.push_back(b);
  return out;
}

nn::ParamList SetVae::parameters() {
  nn::ParamList out{{"embeddings", embeddings_.data()}};
  for (auto& b : h_.parameters("h")) out.push_back(b);
  for (auto& b : f_.parameters("f")) out.push_back(b);
  for (auto& b : decoder_.parameters("decoder")) out.push_back(b);
  return out;
}

bool SetVae::all_finite() const {
  return embeddings_.all_finite() && h_.all_finite() && f_.all_finite() && decoder_.all_finite();
}

SetVae::LossTerms SetVae::loss(const TrainingSample& sample, std::span<const Vector> noise, Gradient* grad) const {
  const std::size_t d = attributes_.size();
  if (sample.targets.size() != d || sample.scored.size() != d) {
    throw ShapeError("training sample has " + std::to_string(sample.targets.size()) + " targets; expected " +
                     std::to_string(d));
  }
  if (noise.empty()) throw ConfigError("loss needs at least one noise draw");

  // Encoder forward, keeping per-attribute caches for the backward pass.
  if (sample.encoder_values.size() != d || sample.encoder_missing.size() != d) {
    throw ShapeError("encoder input size mismatch");
  }
  const std::size_t de = embeddings_.cols();
  std::vector<std::size_t> observed;
  std::vector<nn::ForwardCache> h_caches;
  Vector g(set_dim(), 0.0);
  Vector s(de);
  for (std::size_t j = 0; j < d; ++j) {
    if (sample.encoder_missing[j]) continue;
    const auto e = embeddings_.row(j);
    for (std::size_t k = 0; k < de; ++k) s[k] = sample.encoder_values[j] * e[k];
    auto r = nn::forward(h_, s);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += r.output[k];
    observed.push_back(j);
    h_caches.push_back(std::move(r.cache));
  }
  const auto fr = nn::forward(f_, concat(g, sample.condition));
  const std::span<const double> mu(fr.output.data(), latent_dim_);
  const std::span<const double> lv(fr.output.data() + latent_dim_, latent_dim_);

  LossTerms terms;
  terms.kl = nn::kl_to_standard_normal(mu, lv);

  const double w = sample.weight;
  const double per_draw = 1.0 / static_cast<double>(noise.size());
  Vector dmu(latent_dim_, 0.0);
  Vector dlv(latent_dim_, 0.0);
  Vector z(latent_dim_);
  Vector dz(latent_dim_);
  for (const auto& eps : noise) {
    if (eps.size() != latent_dim_) throw ShapeError("noise draw has wrong latent size");
    for (std::size_t k = 0; k < latent_dim_; ++k) z[k] = mu[k] + std::exp(0.5 * lv[k]) * eps[k];
    const auto dr = nn::forward(decoder_, concat(z, sample.condition));
    const Vector& raw = dr.output;
    Vector draw(raw.size(), 0.0);
    double recon = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (!sample.scored[j]) continue;
      const std::size_t o = head_offset_[j];
      const double x = sample.targets[j];
      if (attributes_[j].is_continuous()) {
        const double m = raw[o];
        const double sigma = nn::softplus(raw[o + 1]) + kSigmaFloor;
        const double u = (x - m) / sigma;
        recon += -nn::kHalfLogTwoPi - std::log(sigma) - 0.5 * u * u;
        // d(-log p)/d mean and d(-log p)/d raw sigma.
        draw[o] = -u / sigma;
        draw[o + 1] = (1.0 / sigma - u * u / sigma) * nn::sigmoid(raw[o + 1]);
      } else {
        const std::size_t m = attributes_[j].cardinality;
        const auto t = static_cast<std::size_t>(x);
        Vector neg(m);
        for (std::size_t i = 0; i < m; ++i) neg[i] = -raw[o + i];
        recon += neg[t] - nn::log_sum_exp(neg);
        const Vector p = nn::softmax(neg);
        for (std::size_t i = 0; i < m; ++i) draw[o + i] = (i == t ? 1.0 : 0.0) - p[i];
      }
    }
    terms.reconstruction += recon * per_draw;
    if (grad) {
      for (double& v : draw) v *= w * per_draw;
      const Vector din = nn::backward_accumulate(decoder_, dr.cache, draw, grad->decoder);
      for (std::size_t k = 0; k < latent_dim_; ++k) {
        dz[k] = din[k];
        dmu[k] += dz[k];
        dlv[k] += dz[k] * eps[k] * 0.5 * std::exp(0.5 * lv[k]);
      }
    }
  }
  terms.loss = w * (-terms.reconstruction + terms.kl);

  if (grad) {
    Vector dout(2 * latent_dim_);
    for (std::size_t k = 0; k < latent_dim_; ++k) {
      dout[k] = dmu[k] + w * mu[k];
      dout[latent_dim_ + k] = dlv[k] + w * 0.5 * std::expm1(lv[k]);
    }
    const Vector dfin = nn::backward_accumulate(f_, fr.cache, dout, grad->f);
    const std::span<const double> dg(dfin.data(), set_dim());
    for (std::size_t i = 0; i < observed.size(); ++i) {
      const std::size_t j = observed[i];
      const Vector ds = nn::backward_accumulate(h_, h_caches[i], dg, grad->h);
      auto ge = grad->embeddings.row(j);
      for (std::size_t k = 0; k < de; ++k) ge[k] += ds[k] * sample.encoder_values[j];
    }
  }
  return terms;
}

void to_json(nlohmann::json& j, const SetVae& v) {
  nlohmann::json attrs;
  to_json(attrs, FeatureSchema(v.attributes_));
  j = {{"attributes", attrs}, {"condition_dim", v.condition_dim_}, {"latent_dim", v.latent_dim_},
       {"embeddings", v.embeddings_}, {"h", v.h_}, {"f", v.f_}, {"decoder", v.decoder_}};
}

void from_json(const nlohmann::json& j, SetVae& v) {
  FeatureSchema schema;
  from_json(j.at("attributes"), schema);
  SetVae out;
  out.attributes_ = schema.attributes();
  out.condition_dim_ = j.at("condition_dim").get<std::size_t>();
  out.latent_dim_ = j.at("latent_dim").get<std::size_t>();
  out.embeddings_ = j.at("embeddings").get<nn::Matrix>();
  out.h_ = j.at("h").get<nn::DenseNet>();
  out.f_ = j.at("f").get<nn::DenseNet>();
  out.decoder_ = j.at("decoder").get<nn::DenseNet>();
  const std::size_t d = out.attributes_.size();
  if (out.embeddings_.rows() != d || out.h_.input_dim() != out.embeddings_.cols() ||
      out.f_.input_dim() != out.h_.output_dim() + out.condition_dim_ ||
      out.f_.output_dim() != 2 * out.latent_dim_ ||
      out.decoder_.input_dim() != out.latent_dim_ + out.condition_dim_) {
    throw DataError("model file: inconsistent network shapes");
  }
  out.build_offsets();
  v = std::move(out);
}

std::vector<double> train_set_vae(SetVae& vae, std::span<const SetVae::TrainingSample> samples,
                                  const OptimizerConfig& config, const std::string& context,
                                  std::optional<EncoderDropout> dropout) {
  if (samples.empty()) throw ConfigError(context + ": no training samples");
  if (config.batch == 0) throw ConfigError(context + ": batch size must be positive");
  if (config.mc_samples == 0) throw ConfigError(context + ": mc_samples must be positive");
  if (!(config.learning_rate > 0.0)) throw ConfigError(context + ": learning rate must be positive");
  if (dropout && (dropout->rate < 0.0 || dropout->rate >= 1.0)) {
    throw ConfigError(context + ": dropout rate must be in [0, 1)");
  }

  Rng rng(mix_seed(config.seed, 0x7261696eULL));
  const std::size_t dz = vae.latent_dim();
  auto draw_noise = [&](Rng& r) {
    std::vector<Vector> noise(config.mc_samples, Vector(dz));
    for (auto& eps : noise) {
      for (double& e : eps) e = standard_normal(r);
    }
    return noise;
  };

  std::vector<double> trace;
  {
    Rng eval_rng(mix_seed(config.seed, 0x6576616cULL));
    Vector losses(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto noise = draw_noise(eval_rng);
      losses[i] = vae.loss(samples[i], noise, nullptr).loss;
    }
    trace.push_back(pairwise_sum(losses) / static_cast<double>(samples.size()));
  }

  nn::AdamState adam;
  adam.learning_rate = config.learning_rate;
  adam.epsilon = config.adam_epsilon;
  auto grad = SetVae::Gradient::zeros_like(vae);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  SetVae::TrainingSample scratch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch_index = 0; start < order.size(); start += config.batch, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      grad.zero();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const auto* sample = &samples[order[b]];
        if (dropout && dropout->rate > 0.0 && uniform01(rng) < dropout->rate) {
          scratch = *sample;
          scratch.encoder_missing[dropout->attribute] = 1;
          sample = &scratch;
        }
        const auto noise = draw_noise(rng);
        const double loss = vae.loss(*sample, noise, &grad).loss;
        if (!std::isfinite(loss)) {
          throw TrainingError(context + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index) + ", sample " + std::to_string(order[b]));
        }
        batch_loss += loss;
      }
      const double n = static_cast<double>(end - start);
      grad.scale(1.0 / n);
      try {
        nn::adam_step(vae.parameters(), grad.blocks(), adam);
      } catch (const TrainingError& e) {
        throw TrainingError(context + ": epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + ": " + e.what());
      }
      epoch_loss += batch_loss;
    }
    trace.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  if (!vae.all_finite()) throw TrainingError(context + ": parameters became non-finite");
  return trace;
}

}  // namespace conspol
