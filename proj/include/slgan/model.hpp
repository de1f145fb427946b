#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slgan/nn.hpp"
#include "slgan/tensor.hpp"

namespace slgan {

inline constexpr float kLogvarMin = -10.0f;
inline constexpr float kLogvarMax = 10.0f;

struct ModelConfig {
  int image_size = 32;  // S; one of 16, 32, 64
  int channels = 3;     // C; 1 or 3
  int attribute_count = 6;
  int latent_dim = 64;

  void validate() const;
  // Number of stride-2 blocks taking S down to 4x4.
  int trunk_blocks() const;
  int trunk_channels(int block) const { return 32 << block; }
  // Width of the discriminator's layer-l feature vector.
  int feature_dim() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// N x C x S x S pixels in [-1, 1].
struct ImageBatch {
  Tensor pixels;
  int count() const { return pixels.rank() > 0 ? pixels.dim(0) : 0; }
};

// N x K, every entry exactly 0 or 1.
struct AttributeBatch {
  Tensor values;
  int count() const { return values.rank() > 0 ? values.dim(0) : 0; }
};

// N x d latent attributes.
struct LatentBatch {
  Tensor values;
  int count() const { return values.rank() > 0 ? values.dim(0) : 0; }
};

// Diagonal Gaussian q(z | x); logvar already clamped to [kLogvarMin, kLogvarMax].
struct GaussianPosterior {
  Tensor mu;
  Tensor logvar;
};

struct DiscriminatorOutput {
  Tensor realness_logit;  // [N]
  Tensor features;        // [N, F], trunk output feeding every head
  Tensor y_logits;        // [N, K]
  Tensor z_mean;          // [N, d]
};

struct ModelParams {
  nn::ParamStore encoder;
  nn::ParamStore decoder;
  nn::ParamStore discriminator;

  bool all_finite() const {
    return encoder.all_finite() && decoder.all_finite() && discriminator.all_finite();
  }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

void validate_images(const Tensor& x, const ModelConfig& cfg);
void validate_attributes(const Tensor& y, int attribute_count);

// mu + exp(0.5 logvar) * noise, elementwise.
LatentBatch sample_latent(const GaussianPosterior& post, const Tensor& noise);

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }

  // Parameters with the documented shapes, all zero.
  ModelParams declare_params() const;
  // N(0, 0.02) weights, zero biases.
  ModelParams init_params(std::uint64_t seed) const;

  GaussianPosterior encode(const ModelParams& params, const ImageBatch& x) const;
  ImageBatch decode(const ModelParams& params, const LatentBatch& z, const AttributeBatch& y) const;
  DiscriminatorOutput discriminate(const ModelParams& params, const ImageBatch& x) const;

  // Traced passes for training. Each keeps what its backward needs.
  struct EncoderPass {
    GaussianPosterior post;
    Tensor raw_logvar;
    nn::Trace trunk;
    nn::LayerCache mu_head, logvar_head;
  };
  struct DecoderPass {
    Tensor image;
    nn::Trace trace;
  };
  struct DiscriminatorPass {
    DiscriminatorOutput out;
    nn::Trace trunk;
    nn::LayerCache real_head, y_head, z_head;
  };
  // Upstream gradients w.r.t. each discriminator output; empty tensors mean zero.
  struct DiscriminatorGrad {
    Tensor realness_logit, features, y_logits, z_mean;
  };

  EncoderPass encode_pass(const nn::ParamStore& enc, const Tensor& x) const;
  void encode_backward(const nn::ParamStore& enc, const EncoderPass& pass, const Tensor& d_mu,
                       const Tensor& d_logvar, nn::ParamStore* grads) const;

  DecoderPass decode_pass(const nn::ParamStore& dec, const Tensor& z, const Tensor& y) const;
  // Returns the gradient w.r.t. z (the latent part of the decoder input) when need_dz.
  Tensor decode_backward(const nn::ParamStore& dec, const DecoderPass& pass, const Tensor& d_image,
                         nn::ParamStore* grads, bool need_dz) const;

  DiscriminatorPass discriminate_pass(const nn::ParamStore& disc, const Tensor& x) const;
  Tensor discriminate_backward(const nn::ParamStore& disc, const DiscriminatorPass& pass,
                               const DiscriminatorGrad& grad, nn::ParamStore* grads,
                               bool need_dx) const;

  // Parameter names each discriminator output depends on.
  std::vector<std::string> trunk_param_names() const { return disc_trunk_.param_names(); }
  std::vector<std::string> realness_path_params() const;
  std::vector<std::string> y_path_params() const;
  std::vector<std::string> z_path_params() const;

 private:
  ModelConfig cfg_;
  nn::Sequential enc_trunk_;
  nn::Linear enc_mu_, enc_logvar_;
  nn::Sequential decoder_;
  nn::Sequential disc_trunk_;
  nn::Linear head_real_, head_y_, head_z_;
};

}  // namespace slgan
