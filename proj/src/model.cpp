#include "slgan/model.hpp"

#include <algorithm>
#include <cmath>

#include "slgan/error.hpp"

namespace slgan {

void ModelConfig::validate() const {
  if (image_size != 16 && image_size != 32 && image_size != 64)
    throw ConfigError("image_size must be 16, 32 or 64, got " + std::to_string(image_size));
  if (channels != 1 && channels != 3)
    throw ConfigError("channels must be 1 or 3, got " + std::to_string(channels));
  if (attribute_count < 1) throw ConfigError("attribute_count must be >= 1");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
}

int ModelConfig::trunk_blocks() const {
  int blocks = 0;
  for (int s = image_size; s > 4; s /= 2) ++blocks;
  return blocks;
}

int ModelConfig::feature_dim() const { return trunk_channels(trunk_blocks() - 1) * 4 * 4; }

void validate_images(const Tensor& x, const ModelConfig& cfg) {
  if (x.rank() != 4 || x.dim(0) < 1 || x.dim(1) != cfg.channels || x.dim(2) != cfg.image_size ||
      x.dim(3) != cfg.image_size) {
    throw ConfigError("image batch " + shape_string(x.shape()) + " does not match architecture [Nx" +
                      std::to_string(cfg.channels) + "x" + std::to_string(cfg.image_size) + "x" +
                      std::to_string(cfg.image_size) + "]");
  }
  for (float v : x.values()) {
    if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
      throw InputError("image pixels must be finite and within [-1, 1]");
  }
}

void validate_attributes(const Tensor& y, int attribute_count) {
  if (y.rank() != 2 || y.dim(1) != attribute_count) {
    throw ConfigError("attribute batch " + shape_string(y.shape()) + " does not match K=" +
                      std::to_string(attribute_count));
  }
  for (float v : y.values()) {
    if (v != 0.0f && v != 1.0f) throw InputError("attribute entries must be exactly 0 or 1");
  }
}

LatentBatch sample_latent(const GaussianPosterior& post, const Tensor& noise) {
  if (post.mu.shape() != post.logvar.shape() || post.mu.shape() != noise.shape()) {
    throw ConfigError("sample_latent: shape mismatch between posterior " +
                      shape_string(post.mu.shape()) + " and noise " + shape_string(noise.shape()));
  }
  Tensor z = post.mu;
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] += std::exp(0.5f * post.logvar[i]) * noise[i];
  return {std::move(z)};
}

Model::Model(ModelConfig cfg)
    : cfg_((cfg.validate(), cfg)),
      enc_mu_("enc.mu", cfg.feature_dim(), cfg.latent_dim),
      enc_logvar_("enc.logvar", cfg.feature_dim(), cfg.latent_dim),
      head_real_("disc.head.real", cfg.feature_dim(), 1),
      head_y_("disc.head.y", cfg.feature_dim(), cfg.attribute_count),
      head_z_("disc.head.z", cfg.feature_dim(), cfg.latent_dim) {
  const int blocks = cfg_.trunk_blocks();

  // Encoder and discriminator trunks: stride-2 4x4 convolutions down to 4x4. The encoder's blocks
  // are pixel-normalized, the discriminator's are not.
  auto build_trunk = [&](nn::Sequential& seq, const std::string& prefix, bool normalize) {
    int in = cfg_.channels;
    for (int b = 0; b < blocks; ++b) {
      const int out = cfg_.trunk_channels(b);
      seq.emplace<nn::Conv2d>(prefix + ".conv" + std::to_string(b), in, out, 4, 2, 1);
      seq.emplace<nn::LeakyRelu>(0.2f);
      if (normalize) seq.emplace<nn::PixelNorm>();
      in = out;
    }
    seq.emplace<nn::Reshape>(std::vector<int>{cfg_.feature_dim()});
  };
  build_trunk(enc_trunk_, "enc", true);
  build_trunk(disc_trunk_, "disc", false);

  // Decoder mirrors the trunk with transposed convolutions, pixel-normalized after each ReLU.
  const int top = cfg_.trunk_channels(blocks - 1);
  decoder_.emplace<nn::Linear>("dec.fc", cfg_.latent_dim + cfg_.attribute_count, top * 16);
  decoder_.emplace<nn::Relu>();
  decoder_.emplace<nn::PixelNorm>();
  decoder_.emplace<nn::Reshape>(std::vector<int>{top, 4, 4});
  for (int b = blocks - 1; b >= 0; --b) {
    const int in = cfg_.trunk_channels(b);
    const int out = b > 0 ? cfg_.trunk_channels(b - 1) : cfg_.channels;
    decoder_.emplace<nn::ConvTranspose2d>("dec.tconv" + std::to_string(blocks - 1 - b), in, out, 4,
                                          2, 1);
    if (b > 0) {
      decoder_.emplace<nn::Relu>();
      decoder_.emplace<nn::PixelNorm>();
    }
  }
  decoder_.emplace<nn::Tanh>();
}

ModelParams Model::declare_params() const {
  ModelParams p;
  enc_trunk_.declare(p.encoder);
  enc_mu_.declare(p.encoder);
  enc_logvar_.declare(p.encoder);
  decoder_.declare(p.decoder);
  disc_trunk_.declare(p.discriminator);
  head_real_.declare(p.discriminator);
  head_y_.declare(p.discriminator);
  head_z_.declare(p.discriminator);
  return p;
}

ModelParams Model::init_params(std::uint64_t seed) const {
  ModelParams p = declare_params();
  std::mt19937_64 rng(seed);
  enc_trunk_.initialize(p.encoder, rng);
  enc_mu_.initialize(p.encoder, rng);
  enc_logvar_.initialize(p.encoder, rng);
  decoder_.initialize(p.decoder, rng);
  disc_trunk_.initialize(p.discriminator, rng);
  head_real_.initialize(p.discriminator, rng);
  head_y_.initialize(p.discriminator, rng);
  head_z_.initialize(p.discriminator, rng);
  return p;
}

GaussianPosterior Model::encode(const ModelParams& params, const ImageBatch& x) const {
  return encode_pass(params.encoder, x.pixels).post;
}

ImageBatch Model::decode(const ModelParams& params, const LatentBatch& z,
                         const AttributeBatch& y) const {
  return {decode_pass(params.decoder, z.values, y.values).image};
}

DiscriminatorOutput Model::discriminate(const ModelParams& params, const ImageBatch& x) const {
  return discriminate_pass(params.discriminator, x.pixels).out;
}

Model::EncoderPass Model::encode_pass(const nn::ParamStore& enc, const Tensor& x) const {
  validate_images(x, cfg_);
  EncoderPass pass;
  const Tensor features = enc_trunk_.forward(enc, x, &pass.trunk);
  pass.post.mu = enc_mu_.forward(enc, features, &pass.mu_head);
  pass.raw_logvar = enc_logvar_.forward(enc, features, &pass.logvar_head);
  pass.post.logvar = pass.raw_logvar;
  for (float& v : pass.post.logvar.values()) v = std::clamp(v, kLogvarMin, kLogvarMax);
  return pass;
}

void Model::encode_backward(const nn::ParamStore& enc, const EncoderPass& pass, const Tensor& d_mu,
                            const Tensor& d_logvar, nn::ParamStore* grads) const {
  Tensor d_raw = d_logvar;
  for (std::size_t i = 0; i < d_raw.size(); ++i) {
    const float r = pass.raw_logvar[i];
    if (r < kLogvarMin || r > kLogvarMax) d_raw[i] = 0.0f;
  }
  Tensor d_features = enc_mu_.backward(enc, pass.mu_head, d_mu, grads, true);
  nn::accumulate(d_features, enc_logvar_.backward(enc, pass.logvar_head, d_raw, grads, true));
  enc_trunk_.backward(enc, pass.trunk, d_features, grads, false);
}

Model::DecoderPass Model::decode_pass(const nn::ParamStore& dec, const Tensor& z,
                                      const Tensor& y) const {
  if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim) {
    throw ConfigError("latent batch " + shape_string(z.shape()) + " does not match d=" +
                      std::to_string(cfg_.latent_dim));
  }
  if (y.rank() != 2 || y.dim(1) != cfg_.attribute_count) {
    throw ConfigError("attribute batch " + shape_string(y.shape()) + " does not match K=" +
                      std::to_string(cfg_.attribute_count));
  }
  if (z.dim(0) != y.dim(0)) throw ConfigError("decode: latent and attribute batch sizes differ");
  DecoderPass pass;
  pass.image = decoder_.forward(dec, concat_columns(z, y), &pass.trace);
  return pass;
}

Tensor Model::decode_backward(const nn::ParamStore& dec, const DecoderPass& pass,
                              const Tensor& d_image, nn::ParamStore* grads, bool need_dz) const {
  Tensor d_input = decoder_.backward(dec, pass.trace, d_image, grads, need_dz);
  if (!need_dz) return {};
  const int n = d_input.dim(0), d = cfg_.latent_dim, width = d_input.dim(1);
  Tensor dz({n, d});
  for (int i = 0; i < n; ++i)
    std::copy_n(d_input.data() + static_cast<std::size_t>(i) * width, d,
                dz.data() + static_cast<std::size_t>(i) * d);
  return dz;
}

Model::DiscriminatorPass Model::discriminate_pass(const nn::ParamStore& disc,
                                                  const Tensor& x) const {
  validate_images(x, cfg_);
  DiscriminatorPass pass;
  pass.out.features = disc_trunk_.forward(disc, x, &pass.trunk);
  pass.out.realness_logit = head_real_.forward(disc, pass.out.features, &pass.real_head)
                                .reshaped({x.dim(0)});
  pass.out.y_logits = head_y_.forward(disc, pass.out.features, &pass.y_head);
  pass.out.z_mean = head_z_.forward(disc, pass.out.features, &pass.z_head);
  return pass;
}

Tensor Model::discriminate_backward(const nn::ParamStore& disc, const DiscriminatorPass& pass,
                                    const DiscriminatorGrad& grad, nn::ParamStore* grads,
                                    bool need_dx) const {
  const int n = pass.out.features.dim(0);
  Tensor d_features = grad.features.empty() ? Tensor(pass.out.features.shape()) : grad.features;
  if (!grad.realness_logit.empty()) {
    nn::accumulate(d_features, head_real_.backward(disc, pass.real_head,
                                                   grad.realness_logit.reshaped({n, 1}), grads,
                                                   true));
  }
  if (!grad.y_logits.empty())
    nn::accumulate(d_features, head_y_.backward(disc, pass.y_head, grad.y_logits, grads, true));
  if (!grad.z_mean.empty())
    nn::accumulate(d_features, head_z_.backward(disc, pass.z_head, grad.z_mean, grads, true));
  return disc_trunk_.backward(disc, pass.trunk, d_features, grads, need_dx);
}

std::vector<std::string> Model::realness_path_params() const {
  auto names = disc_trunk_.param_names();
  for (auto& n : head_real_.param_names()) names.push_back(n);
  return names;
}

std::vector<std::string> Model::y_path_params() const {
  auto names = disc_trunk_.param_names();
  for (auto& n : head_y_.param_names()) names.push_back(n);
  return names;
}

std::vector<std::string> Model::z_path_params() const {
  auto names = disc_trunk_.param_names();
  for (auto& n : head_z_.param_names()) names.push_back(n);
  return names;
}

}  // namespace slgan
