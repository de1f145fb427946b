#include "slgan/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "slgan/checkpoint.hpp"
#include "slgan/error.hpp"

namespace slgan {

using losses::LossReport;

// ------------------------------------------------------------------ config

ModelConfig TrainConfig::model_config() const {
  return ModelConfig{image_size, channels, attribute_count, latent_dim};
}

double TrainConfig::pixel_weight() const {
  const double elements = static_cast<double>(channels) * image_size * image_size;
  return elements / (2.0 * pixel_noise_std * pixel_noise_std);
}

void TrainConfig::validate() const {
  model_config().validate();
  if (lambda1 < 0.0) throw ConfigError("lambda1 must be >= 0");
  if (lambda2 < 0.0) throw ConfigError("lambda2 must be >= 0");
  if (!(pixel_noise_std > 0.0) || !std::isfinite(pixel_noise_std))
    throw ConfigError("pixel_noise_std must be > 0");
  if (lr_enc < 0.0 || lr_dec < 0.0 || lr_disc < 0.0)
    throw ConfigError("learning rates must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (adam_epsilon <= 0.0) throw ConfigError("adam_epsilon must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
  for (double w : rg_z_weights)
    if (w < 0.0) throw ConfigError("rg_z_weights must be >= 0");
  for (double w : rg_y_g_weights)
    if (w < 0.0) throw ConfigError("rg_y_g_weights must be >= 0");
  if (update_order != "encoder,decoder,discriminator")
    throw ConfigError("update_order: only 'encoder,decoder,discriminator' is supported");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["lambda1"] = lambda1;
  j["lambda2"] = lambda2;
  j["lr_enc"] = lr_enc;
  j["lr_dec"] = lr_dec;
  j["lr_disc"] = lr_disc;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_epsilon"] = adam_epsilon;
  j["batch_size"] = batch_size;
  j["latent_dim"] = latent_dim;
  j["attribute_count"] = attribute_count;
  j["image_size"] = image_size;
  j["channels"] = channels;
  j["iterations"] = iterations;
  j["seed"] = seed;
  j["gan_g_mode"] = std::string(losses::to_string(gan_g_mode));
  j["rg_z_weights"] = rg_z_weights;
  j["rg_y_g_weights"] = rg_y_g_weights;
  j["checkpoint_interval"] = checkpoint_interval;
  j["grad_clip_norm"] = grad_clip_norm;
  j["encoder_feature_recon"] = encoder_feature_recon;
  j["pixel_noise_std"] = pixel_noise_std;
  j["decoder_pixel_recon"] = decoder_pixel_recon;
  j["update_order"] = update_order;
  return j;
}

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const std::string& key, T& out) {
  try {
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned())
          throw ConfigError("expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("expected a string");
    }
    out = v.get<T>();
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

template <std::size_t N>
void read_array(const nlohmann::json& j, const std::string& key, std::array<double, N>& out) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != N)
    throw ConfigError("config key '" + key + "': expected an array of " + std::to_string(N) +
                      " numbers");
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number())
      throw ConfigError("config key '" + key + "': expected an array of numbers");
    out[i] = v[i].get<double>();
  }
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda1") read_key(j, key, c.lambda1);
    else if (key == "lambda2") read_key(j, key, c.lambda2);
    else if (key == "lr_enc") read_key(j, key, c.lr_enc);
    else if (key == "lr_dec") read_key(j, key, c.lr_dec);
    else if (key == "lr_disc") read_key(j, key, c.lr_disc);
    else if (key == "beta1") read_key(j, key, c.beta1);
    else if (key == "beta2") read_key(j, key, c.beta2);
    else if (key == "adam_epsilon") read_key(j, key, c.adam_epsilon);
    else if (key == "batch_size") read_key(j, key, c.batch_size);
    else if (key == "latent_dim") read_key(j, key, c.latent_dim);
    else if (key == "attribute_count") read_key(j, key, c.attribute_count);
    else if (key == "image_size") read_key(j, key, c.image_size);
    else if (key == "channels") read_key(j, key, c.channels);
    else if (key == "iterations") read_key(j, key, c.iterations);
    else if (key == "seed") read_key(j, key, c.seed);
    else if (key == "gan_g_mode") {
      std::string mode;
      read_key(j, key, mode);
      try {
        c.gan_g_mode = losses::parse_gan_mode(mode);
      } catch (const ConfigError& e) {
        throw ConfigError("config key 'gan_g_mode': " + std::string(e.what()));
      }
    } else if (key == "rg_z_weights") read_array(j, key, c.rg_z_weights);
    else if (key == "rg_y_g_weights") read_array(j, key, c.rg_y_g_weights);
    else if (key == "checkpoint_interval") read_key(j, key, c.checkpoint_interval);
    else if (key == "grad_clip_norm") read_key(j, key, c.grad_clip_norm);
    else if (key == "encoder_feature_recon") read_key(j, key, c.encoder_feature_recon);
    else if (key == "pixel_noise_std") read_key(j, key, c.pixel_noise_std);
    else if (key == "decoder_pixel_recon") read_key(j, key, c.decoder_pixel_recon);
    else if (key == "update_order") read_key(j, key, c.update_order);
    else throw ConfigError("config key '" + key + "': unknown key");
  }
  return c;
}

// ------------------------------------------------------------------- state

TrainState init_state(const TrainConfig& config, std::vector<std::string> attribute_names,
                      Tensor attribute_rows) {
  config.validate();
  if (static_cast<int>(attribute_names.size()) != config.attribute_count) {
    throw ConfigError("attribute schema has " + std::to_string(attribute_names.size()) +
                      " names but config.attribute_count is " +
                      std::to_string(config.attribute_count));
  }
  if (attribute_rows.rank() != 2 || attribute_rows.dim(1) != config.attribute_count)
    throw ConfigError("attribute rows do not match attribute_count");
  const Model model(config.model_config());
  TrainState s;
  s.config = config;
  s.attribute_names = std::move(attribute_names);
  s.params = model.init_params(config.seed);
  s.optimizer = {AdamState::for_params(s.params.encoder), AdamState::for_params(s.params.decoder),
                 AdamState::for_params(s.params.discriminator)};
  s.iteration = 0;
  // Separate stream from the parameter initializer.
  s.rng.seed(config.seed ^ 0x9e3779b97f4a7c15ULL);
  s.attribute_rows = std::move(attribute_rows);
  return s;
}

Tensor standard_normal(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  Tensor t({rows, cols});
  for (float& v : t.values()) v = dist(rng);
  return t;
}

// ------------------------------------------------------------------- stages

namespace {

std::vector<double> widen(const Tensor& t) { return {t.storage().begin(), t.storage().end()}; }

Tensor narrow(const std::vector<double>& v, std::vector<int> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(scale * v[i]);
  return t;
}

AdamConfig adam_for(const TrainConfig& c, double lr) {
  return AdamConfig{lr, c.beta1, c.beta2, c.adam_epsilon};
}

void check_report(const LossReport& report, const char* stage) {
  const std::string bad = report.first_non_finite();
  if (!bad.empty())
    throw NonFiniteLoss(bad, std::string("non-finite loss term '") + bad + "' in " + stage +
                                 " stage; aborting before the update");
}

void check_params(const TrainState& s, const char* stage) {
  if (!s.params.all_finite())
    throw NonFiniteLoss("parameters", std::string("non-finite parameter after ") + stage +
                                          " stage update");
}

void require_batch(const Tensor& t, int n, const char* what) {
  if (t.rank() < 1 || t.dim(0) != n)
    throw ConfigError(std::string(what) + ": batch size does not match the image batch");
}

// Decoder and discriminator halves shared by all three stages.
struct AdversarialInputs {
  const Tensor* x_real;      // real images for the discriminator
  const Tensor* y_real;      // their labels (rg_y_d)
  const Tensor* z;           // decoder latent input, also the rg_z target on fakes
  const Tensor* y_dec;       // decoder attribute input, the rg_y_g target
  int rg_z_fake_term;        // 1 = b, 2 = c, 3 = d
  int rg_y_g_term;           // 0 = i, 1 = ii, 2 = iii
  bool feature_recon;        // recon_feature against x_real (same x as the source image)
  const Tensor* z_real;      // rg_z term a target on real data, or nullptr
};

struct AdversarialResult {
  Model::DecoderPass dec_pass;
  Model::DiscriminatorPass real_pass, fake_pass;
  std::vector<double> d_feat_fake;  // d recon_feature / d fake features
  nn::ParamStore dec_grads, disc_grads;
};

AdversarialResult adversarial_grads(const Model& model, const TrainState& s,
                                    const AdversarialInputs& in, LossReport& report) {
  using namespace losses;
  const TrainConfig& cfg = s.config;
  const int n = in.z->dim(0);
  AdversarialResult r;
  r.dec_pass = model.decode_pass(s.params.decoder, *in.z, *in.y_dec);
  r.real_pass = model.discriminate_pass(s.params.discriminator, *in.x_real);
  r.fake_pass = model.discriminate_pass(s.params.discriminator, r.dec_pass.image);
  const DiscriminatorOutput& real = r.real_pass.out;
  const DiscriminatorOutput& fake = r.fake_pass.out;

  const auto real_logit = widen(real.realness_logit), fake_logit = widen(fake.realness_logit);
  const auto gd = gan_loss_d<double>(real_logit, fake_logit);
  const auto gg = gan_loss_g<double>(fake_logit, cfg.gan_g_mode);
  const auto ryd = recognition_loss_y<double>(widen(*in.y_real), widen(real.y_logits));
  const auto ryg = recognition_loss_y<double>(widen(*in.y_dec), widen(fake.y_logits));
  const auto rz_fake = recognition_loss_z<double>(widen(*in.z), widen(fake.z_mean), n);

  report.gan_d = gd.value;
  report.gan_g = gg.value;
  report.rg_y_d = ryd.value;
  report.rg_y_g_terms[static_cast<std::size_t>(in.rg_y_g_term)] = ryg.value;
  report.rg_z_terms[static_cast<std::size_t>(in.rg_z_fake_term)] = rz_fake.value;

  Loss2<double> rz_real;
  if (in.z_real) {
    rz_real = recognition_loss_z<double>(widen(*in.z_real), widen(real.z_mean), in.z_real->dim(0));
    report.rg_z_terms[0] = rz_real.value;
  }
  Loss2<double> rf;
  if (in.feature_recon) {
    rf = recon_feature_loss<double>(widen(real.features), widen(fake.features));
    report.recon_feature = rf.value;
    r.d_feat_fake = rf.grad_b;
  }
  report.rg_z = assemble_rg_z(report.rg_z_terms, cfg.rg_z_weights);
  report.rg_y_g = 0.0;
  for (std::size_t i = 0; i < 3; ++i) report.rg_y_g += cfg.rg_y_g_weights[i] * report.rg_y_g_terms[i];
  report.total_dec = assemble_generator_loss(report.gan_g, report.rg_z, report.rg_y_g,
                                             report.recon_feature, cfg.lambda1, cfg.lambda2);
  report.total_disc = assemble_discriminator_loss(report.gan_d, report.rg_y_d, report.rg_z);

  const double wz = cfg.rg_z_weights[static_cast<std::size_t>(in.rg_z_fake_term)];
  const double wy = cfg.rg_y_g_weights[static_cast<std::size_t>(in.rg_y_g_term)];
  const int k = cfg.attribute_count, d = cfg.latent_dim;

  // Decoder: gradient of L_dec through the (fixed) discriminator into the fake images.
  Model::DiscriminatorGrad g_dec;
  g_dec.realness_logit = narrow(gg.grad, {n});
  g_dec.y_logits = narrow(ryg.grad, {n, k}, cfg.lambda1 * wy);
  g_dec.z_mean = narrow(rz_fake.grad_b, {n, d}, cfg.lambda1 * wz);
  if (in.feature_recon) g_dec.features = narrow(rf.grad_b, fake.features.shape(), cfg.lambda2);
  const Tensor dx_fake =
      model.discriminate_backward(s.params.discriminator, r.fake_pass, g_dec, nullptr, true);
  r.dec_grads = s.params.decoder.zeros_like();
  model.decode_backward(s.params.decoder, r.dec_pass, dx_fake, &r.dec_grads, false);

  // Discriminator: GAN on both, rg_y_d on real only, rg_z on whichever terms are active.
  r.disc_grads = s.params.discriminator.zeros_like();
  Model::DiscriminatorGrad g_fake;
  g_fake.realness_logit = narrow(gd.grad_b, {n});
  g_fake.z_mean = narrow(rz_fake.grad_b, {n, d}, wz);
  model.discriminate_backward(s.params.discriminator, r.fake_pass, g_fake, &r.disc_grads, false);
  Model::DiscriminatorGrad g_real;
  g_real.realness_logit = narrow(gd.grad_a, {in.x_real->dim(0)});
  g_real.y_logits = narrow(ryd.grad, real.y_logits.shape());
  if (in.z_real) g_real.z_mean = narrow(rz_real.grad_b, real.z_mean.shape(), cfg.rg_z_weights[0]);
  model.discriminate_backward(s.params.discriminator, r.real_pass, g_real, &r.disc_grads, false);
  return r;
}

void apply_decoder_and_discriminator(TrainState& s, AdversarialResult& r) {
  const TrainConfig& cfg = s.config;
  clip_global_norm(r.dec_grads, cfg.grad_clip_norm);
  adam_step(s.params.decoder, r.dec_grads, s.optimizer.decoder, adam_for(cfg, cfg.lr_dec));
  clip_global_norm(r.disc_grads, cfg.grad_clip_norm);
  adam_step(s.params.discriminator, r.disc_grads, s.optimizer.discriminator,
            adam_for(cfg, cfg.lr_disc));
}

}  // namespace

LossReport stage_reconstruction_step(const Model& model, TrainState& s, const ImageBatch& x,
                                     const AttributeBatch& y_true, const Tensor& noise) {
  using namespace losses;
  const TrainConfig& cfg = s.config;
  const int n = x.count();
  require_batch(y_true.values, n, "stage_reconstruction_step y_true");
  require_batch(noise, n, "stage_reconstruction_step noise");
  validate_attributes(y_true.values, cfg.attribute_count);

  LossReport report;
  const Model::EncoderPass enc = model.encode_pass(s.params.encoder, x.pixels);
  const Tensor z = sample_latent(enc.post, noise).values;

  AdversarialInputs in{&x.pixels, &y_true.values, &z, &y_true.values, 1, 1, true, &z};
  AdversarialResult adv = adversarial_grads(model, s, in, report);

  // Encoder: L_enc = KL + weighted pixel reconstruction, through the decoder and the
  // reparameterization.
  const auto kl = kl_prior_loss<double>(widen(enc.post.mu), widen(enc.post.logvar), n);
  const auto rp = recon_pixel_loss<double>(widen(x.pixels), widen(adv.dec_pass.image));
  report.kl_prior = kl.value;
  report.recon_pixel = rp.value;
  const double w = cfg.pixel_weight();
  report.total_enc = encoder_loss(kl.value, w * rp.value);
  if (cfg.encoder_feature_recon) report.total_enc += report.recon_feature;
  check_report(report, "reconstruction");

  Tensor d_image = narrow(rp.grad_b, adv.dec_pass.image.shape(), w);
  if (cfg.decoder_pixel_recon)
    model.decode_backward(s.params.decoder, adv.dec_pass, d_image, &adv.dec_grads, false);
  if (cfg.encoder_feature_recon) {
    Model::DiscriminatorGrad g;
    g.features = narrow(adv.d_feat_fake, adv.fake_pass.out.features.shape());
    nn::accumulate(d_image, model.discriminate_backward(s.params.discriminator, adv.fake_pass, g,
                                                        nullptr, true));
  }
  const Tensor dz = model.decode_backward(s.params.decoder, adv.dec_pass, d_image, nullptr, true);
  Tensor d_mu = narrow(kl.grad_a, enc.post.mu.shape());
  Tensor d_logvar = narrow(kl.grad_b, enc.post.logvar.shape());
  for (std::size_t i = 0; i < d_mu.size(); ++i) {
    d_mu[i] += dz[i];
    d_logvar[i] += dz[i] * 0.5f * std::exp(0.5f * enc.post.logvar[i]) * noise[i];
  }
  nn::ParamStore enc_grads = s.params.encoder.zeros_like();
  model.encode_backward(s.params.encoder, enc, d_mu, d_logvar, &enc_grads);

  clip_global_norm(enc_grads, cfg.grad_clip_norm);
  adam_step(s.params.encoder, enc_grads, s.optimizer.encoder, adam_for(cfg, cfg.lr_enc));
  apply_decoder_and_discriminator(s, adv);
  check_params(s, "reconstruction");
  return report;
}

LossReport stage_modification_step(const Model& model, TrainState& s, const ImageBatch& x,
                                   const AttributeBatch& y_true, const AttributeBatch& y_random,
                                   const Tensor& noise) {
  const int n = x.count();
  require_batch(y_true.values, n, "stage_modification_step y_true");
  require_batch(y_random.values, n, "stage_modification_step y_random");
  require_batch(noise, n, "stage_modification_step noise");
  validate_attributes(y_true.values, s.config.attribute_count);
  validate_attributes(y_random.values, s.config.attribute_count);

  LossReport report;
  // Encoder is only read here.
  const GaussianPosterior post = model.encode_pass(s.params.encoder, x.pixels).post;
  const Tensor z = sample_latent(post, noise).values;
  AdversarialInputs in{&x.pixels, &y_true.values, &z, &y_random.values, 3, 0, true, nullptr};
  AdversarialResult adv = adversarial_grads(model, s, in, report);
  check_report(report, "modification");
  apply_decoder_and_discriminator(s, adv);
  check_params(s, "modification");
  return report;
}

LossReport stage_generation_step(const Model& model, TrainState& s, const ImageBatch& x_real,
                                 const AttributeBatch& y_real, const LatentBatch& z_prior,
                                 const AttributeBatch& y_sampled) {
  require_batch(y_real.values, x_real.count(), "stage_generation_step y_real");
  require_batch(y_sampled.values, z_prior.count(), "stage_generation_step y_sampled");
  validate_attributes(y_real.values, s.config.attribute_count);
  validate_attributes(y_sampled.values, s.config.attribute_count);

  LossReport report;
  AdversarialInputs in{&x_real.pixels, &y_real.values, &z_prior.values, &y_sampled.values,
                       2,        2,     false,           nullptr};
  AdversarialResult adv = adversarial_grads(model, s, in, report);
  check_report(report, "generation");
  apply_decoder_and_discriminator(s, adv);
  check_params(s, "generation");
  return report;
}

// ----------------------------------------------------------------- training

std::string format_metrics_line(const IterationReport& report) {
  std::string line = "iteration=" + std::to_string(report.iteration);
  char buf[64];
  auto append = [&](const char* prefix, const LossReport& r) {
    for (const auto& [name, value] : r.entries()) {
      std::snprintf(buf, sizeof buf, "%.9g", value);
      line += ' ';
      line += prefix;
      line += name;
      line += '=';
      line += buf;
    }
  };
  append("rec.", report.reconstruction);
  append("mod.", report.modification);
  append("gen.", report.generation);
  return line;
}

namespace {

std::vector<int> draw_indices(const data::Split& split, int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(split.begin, split.end - 1);
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int& i : idx) i = pick(rng);
  return idx;
}

void check_dataset(const TrainState& s, const data::Dataset& ds) {
  const TrainConfig& c = s.config;
  if (ds.size() < 1 || ds.manifest.train.size() < 1) throw InputError("dataset has no training items");
  if (ds.labels.dim(1) != c.attribute_count)
    throw ConfigError("dataset has K=" + std::to_string(ds.labels.dim(1)) +
                      " attributes but config.attribute_count is " +
                      std::to_string(c.attribute_count));
  if (ds.manifest.attribute_names != s.attribute_names)
    throw ConfigError("dataset attribute schema differs from the training state's schema");
  if (ds.image_size() != c.image_size || ds.channels() != c.channels)
    throw ConfigError("dataset images are " + std::to_string(ds.channels()) + "x" +
                      std::to_string(ds.image_size()) + " but config expects " +
                      std::to_string(c.channels) + "x" + std::to_string(c.image_size));
}

}  // namespace

IterationReport run_iteration(const Model& model, TrainState& s, const data::Dataset& ds) {
  const TrainConfig& c = s.config;
  const int n = c.batch_size, d = c.latent_dim;
  const data::AttributeMarginal marginal(s.attribute_rows);
  IterationReport out;
  out.iteration = s.iteration + 1;

  {
    const auto idx = draw_indices(ds.manifest.train, n, s.rng);
    const Tensor noise = standard_normal(n, d, s.rng);
    out.reconstruction =
        stage_reconstruction_step(model, s, ds.image_batch(idx), ds.label_batch(idx), noise);
  }
  {
    const auto idx = draw_indices(ds.manifest.train, n, s.rng);
    const AttributeBatch y_random = marginal.sample_batch(n, s.rng);
    const Tensor noise = standard_normal(n, d, s.rng);
    out.modification = stage_modification_step(model, s, ds.image_batch(idx), ds.label_batch(idx),
                                                y_random, noise);
  }
  {
    const auto idx = draw_indices(ds.manifest.train, n, s.rng);
    const LatentBatch z{standard_normal(n, d, s.rng)};
    const AttributeBatch y_sampled = marginal.sample_batch(n, s.rng);
    out.generation =
        stage_generation_step(model, s, ds.image_batch(idx), ds.label_batch(idx), z, y_sampled);
  }
  s.iteration = out.iteration;
  return out;
}

void train(TrainState& s, const data::Dataset& ds, const TrainOptions& options) {
  s.config.validate();
  check_dataset(s, ds);
  const Model model(s.config.model_config());
  namespace fs = std::filesystem;
  if (options.checkpoint_dir) fs::create_directories(*options.checkpoint_dir);

  while (s.iteration < s.config.iterations) {
    const IterationReport report = run_iteration(model, s, ds);
    if (options.metrics) {
      *options.metrics << format_metrics_line(report) << '\n';
      options.metrics->flush();
    }
    if (options.on_iteration) options.on_iteration(s, report);
    if (options.checkpoint_dir && s.config.checkpoint_interval > 0 &&
        s.iteration % s.config.checkpoint_interval == 0) {
      save_checkpoint(s, *options.checkpoint_dir / checkpoint_file_name(s.iteration));
    }
  }
  if (options.checkpoint_dir) save_checkpoint(s, *options.checkpoint_dir / "final.slgan");
}

TrainState train(const TrainConfig& config, const data::Dataset& ds, const TrainOptions& options) {
  TrainState s = init_state(config, ds.manifest.attribute_names,
                            ds.labels.rows(ds.manifest.train.begin, ds.manifest.train.end));
  train(s, ds, options);
  return s;
}

// ---------------------------------------------------------------- inference

NoiseMode parse_noise_mode(const std::string& name) {
  if (name == "mean") return NoiseMode::mean;
  if (name == "sample") return NoiseMode::sample;
  throw ConfigError("unknown noise mode '" + name + "' (expected mean or sample)");
}

ImageBatch generate(const Model& model, const ModelParams& params, std::span<const float> y,
                    int count, std::uint64_t seed) {
  const int k = model.config().attribute_count;
  if (static_cast<int>(y.size()) != k)
    throw ConfigError("generate: expected " + std::to_string(k) + " attributes, got " +
                      std::to_string(y.size()));
  if (count < 1) throw InputError("generate: count must be >= 1");
  std::mt19937_64 rng(seed);
  const Tensor z = standard_normal(count, model.config().latent_dim, rng);
  Tensor ys({count, k});
  for (int i = 0; i < count; ++i) std::copy(y.begin(), y.end(), ys.data() + static_cast<std::size_t>(i) * k);
  validate_attributes(ys, k);
  return model.decode(params, LatentBatch{z}, AttributeBatch{ys});
}

ImageBatch modify(const Model& model, const ModelParams& params, const ImageBatch& x,
                  const AttributeBatch& y, NoiseMode noise_mode, std::uint64_t seed) {
  const int n = x.count(), k = model.config().attribute_count;
  Tensor ys = y.values;
  if (ys.rank() == 2 && ys.dim(0) == 1 && n > 1) {
    Tensor b({n, k});
    for (int i = 0; i < n; ++i) std::copy_n(ys.data(), k, b.data() + static_cast<std::size_t>(i) * k);
    ys = std::move(b);
  }
  validate_attributes(ys, k);
  if (ys.dim(0) != n) throw ConfigError("modify: attribute and image batch sizes differ");
  const GaussianPosterior post = model.encode(params, x);
  Tensor noise(post.mu.shape());
  if (noise_mode == NoiseMode::sample) {
    std::mt19937_64 rng(seed);
    noise = standard_normal(n, model.config().latent_dim, rng);
  }
  return model.decode(params, sample_latent(post, noise), AttributeBatch{ys});
}

}  // namespace slgan
