#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "slgan/data.hpp"
#include "slgan/losses.hpp"
#include "slgan/model.hpp"
#include "slgan/optimizer.hpp"

namespace slgan {

// Every hyperparameter of a run. Serialized into each checkpoint.
struct TrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lr_enc = 2e-4;
  double lr_dec = 2e-4;
  double lr_disc = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 64;
  int latent_dim = 64;
  int attribute_count = 6;
  int image_size = 32;
  int channels = 3;
  std::int64_t iterations = 3000;
  std::uint64_t seed = 1;
  losses::GanGeneratorMode gan_g_mode = losses::GanGeneratorMode::non_saturating;
  std::array<double, 4> rg_z_weights{1.0, 1.0, 1.0, 1.0};  // terms a, b, c, d
  std::array<double, 3> rg_y_g_weights{1.0, 1.0, 1.0};     // terms i, ii, iii
  std::int64_t checkpoint_interval = 0;                     // 0: final checkpoint only
  double grad_clip_norm = 10.0;                              // <= 0 disables
  // Also route the feature-wise reconstruction loss into the encoder. Off: encoder sees
  // only kl_prior + recon_pixel.
  bool encoder_feature_recon = false;
  // Pixel likelihood std. The reconstruction objective is recon_pixel * pixel_weight(), the
  // summed Gaussian NLL over image elements; recon_pixel itself stays a per-element mean.
  double pixel_noise_std = 0.5;
  // Also train the decoder on the weighted pixel reconstruction in the reconstruction stage.
  // Off: the decoder sees only L_dec there. total_dec never includes it.
  bool decoder_pixel_recon = true;
  // Recorded for provenance; the only supported schedule.
  std::string update_order = "encoder,decoder,discriminator";

  ModelConfig model_config() const;
  double pixel_weight() const;
  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys or wrong types throw ConfigError naming the key.
  static TrainConfig from_json(const nlohmann::json& j);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct OptimizerState {
  AdamState encoder;
  AdamState decoder;
  AdamState discriminator;
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct TrainState {
  TrainConfig config;
  std::vector<std::string> attribute_names;
  ModelParams params;
  OptimizerState optimizer;
  std::int64_t iteration = 0;
  std::mt19937_64 rng;
  // Training-split attribute rows; the empirical p(y) used for sampling at train and inference time.
  Tensor attribute_rows;
};

// Fresh parameters (seeded from config.seed), zeroed optimizer moments, iteration 0.
TrainState init_state(const TrainConfig& config, std::vector<std::string> attribute_names,
                      Tensor attribute_rows);

// Draws N(0, 1) values into a [rows, cols] tensor.
Tensor standard_normal(int rows, int cols, std::mt19937_64& rng);

// Stage 1: x with its own labels, z = mu + sigma * noise. Updates encoder, decoder,
// discriminator in that order. Active terms: rg_z a + b, rg_y_g ii.
losses::LossReport stage_reconstruction_step(const Model& model, TrainState& state,
                                             const ImageBatch& x, const AttributeBatch& y_true,
                                             const Tensor& noise);

// Stage 2: x decoded under attributes drawn from p(y); encoder frozen. Active terms: rg_z d,
// rg_y_g i, recon_feature against x. y_true (x's own labels) feeds the discriminator's rg_y_d.
losses::LossReport stage_modification_step(const Model& model, TrainState& state,
                                           const ImageBatch& x, const AttributeBatch& y_true,
                                           const AttributeBatch& y_random, const Tensor& noise);

// Stage 3: z from the prior, y from p(y). Active terms: rg_z c, rg_y_g iii. The real batch
// (x_real, y_real) feeds the discriminator's GAN and rg_y_d terms.
losses::LossReport stage_generation_step(const Model& model, TrainState& state,
                                         const ImageBatch& x_real, const AttributeBatch& y_real,
                                         const LatentBatch& z_prior,
                                         const AttributeBatch& y_sampled);

struct IterationReport {
  std::int64_t iteration = 0;
  losses::LossReport reconstruction;
  losses::LossReport modification;
  losses::LossReport generation;
};

// One metrics-log line: `iteration=<i> rec.<name>=<v> ... mod.<name>=<v> ... gen.<name>=<v>`.
std::string format_metrics_line(const IterationReport& report);

// One full iteration (three stages) with batches drawn from state.rng over `dataset`'s train split.
IterationReport run_iteration(const Model& model, TrainState& state, const data::Dataset& dataset);

struct TrainOptions {
  std::ostream* metrics = nullptr;                  // one line per iteration
  std::optional<std::filesystem::path> checkpoint_dir;  // periodic + final checkpoints
  std::function<void(const TrainState&, const IterationReport&)> on_iteration;
};

// Runs iterations state.iteration + 1 .. config.iterations. A non-finite loss throws
// NonFiniteLoss before any parameter is touched; checkpoints on disk stay at the last good one.
void train(TrainState& state, const data::Dataset& dataset, const TrainOptions& options = {});

// Convenience: init_state from the dataset, then train.
TrainState train(const TrainConfig& config, const data::Dataset& dataset,
                 const TrainOptions& options = {});

enum class NoiseMode { mean, sample };
NoiseMode parse_noise_mode(const std::string& name);

// count images decoded from z ~ N(0, I) with attributes y (one row, broadcast).
ImageBatch generate(const Model& model, const ModelParams& params, std::span<const float> y,
                    int count, std::uint64_t seed);

// decode(sample_latent(encode(x)), y). y is [N, K] or a single row broadcast.
// noise_mode::sample draws its noise from `seed`.
ImageBatch modify(const Model& model, const ModelParams& params, const ImageBatch& x,
                  const AttributeBatch& y, NoiseMode noise_mode, std::uint64_t seed = 0);

}  // namespace slgan
