#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slgan/error.hpp"

// Every term of the semi-latent GAN objective as a scalar function returning its value and the
// gradient w.r.t. each differentiable input. Templated so tests can run in double precision.
namespace slgan::losses {

enum class GanGeneratorMode { paper_minimax, non_saturating };

GanGeneratorMode parse_gan_mode(std::string_view name);
std::string_view to_string(GanGeneratorMode mode);

template <std::floating_point T>
struct Loss1 {
  T value{};
  std::vector<T> grad;
};

template <std::floating_point T>
struct Loss2 {
  T value{};
  std::vector<T> grad_a;
  std::vector<T> grad_b;
};

// log(1 + e^x) without overflow.
template <std::floating_point T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <std::floating_point T>
T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

namespace detail {
inline void require_same_size(std::size_t a, std::size_t b, const char* who) {
  if (a != b) {
    throw InputError(std::string(who) + ": size mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}
inline void require_nonempty(std::size_t n, const char* who) {
  if (n == 0) throw InputError(std::string(who) + ": empty input");
}
}  // namespace detail

// mean[-log sigma(real)] + mean[-log(1 - sigma(fake))]; grads w.r.t. (real, fake).
template <std::floating_point T>
Loss2<T> gan_loss_d(std::span<const T> real_logits, std::span<const T> fake_logits) {
  detail::require_nonempty(real_logits.size(), "gan_loss_d");
  detail::require_nonempty(fake_logits.size(), "gan_loss_d");
  Loss2<T> out;
  const T inv_r = T(1) / static_cast<T>(real_logits.size());
  const T inv_f = T(1) / static_cast<T>(fake_logits.size());
  out.grad_a.resize(real_logits.size());
  out.grad_b.resize(fake_logits.size());
  T sum_r = 0, sum_f = 0;
  for (std::size_t i = 0; i < real_logits.size(); ++i) {
    sum_r += softplus(-real_logits[i]);
    out.grad_a[i] = -sigmoid(-real_logits[i]) * inv_r;
  }
  for (std::size_t i = 0; i < fake_logits.size(); ++i) {
    sum_f += softplus(fake_logits[i]);
    out.grad_b[i] = sigmoid(fake_logits[i]) * inv_f;
  }
  out.value = sum_r * inv_r + sum_f * inv_f;
  return out;
}

// paper_minimax: mean log(1 - sigma(fake)); non_saturating: mean -log sigma(fake).
template <std::floating_point T>
Loss1<T> gan_loss_g(std::span<const T> fake_logits, GanGeneratorMode mode) {
  detail::require_nonempty(fake_logits.size(), "gan_loss_g");
  Loss1<T> out;
  const T inv = T(1) / static_cast<T>(fake_logits.size());
  out.grad.resize(fake_logits.size());
  T sum = 0;
  for (std::size_t i = 0; i < fake_logits.size(); ++i) {
    const T x = fake_logits[i];
    switch (mode) {
      case GanGeneratorMode::paper_minimax:
        sum -= softplus(x);
        out.grad[i] = -sigmoid(x) * inv;
        break;
      case GanGeneratorMode::non_saturating:
        sum += softplus(-x);
        out.grad[i] = -sigmoid(-x) * inv;
        break;
      default:
        throw ConfigError("gan_loss_g: unknown generator mode");
    }
  }
  out.value = sum * inv;
  return out;
}

// KL(N(mu, e^logvar) || N(0, 1)) summed over dims, averaged over the batch; grads (mu, logvar).
template <std::floating_point T>
Loss2<T> kl_prior_loss(std::span<const T> mu, std::span<const T> logvar, int batch) {
  detail::require_same_size(mu.size(), logvar.size(), "kl_prior_loss");
  if (batch < 1) throw InputError("kl_prior_loss: batch must be >= 1");
  Loss2<T> out;
  const T inv = T(1) / static_cast<T>(batch);
  out.grad_a.resize(mu.size());
  out.grad_b.resize(mu.size());
  T sum = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const T var = std::exp(logvar[i]);
    sum += mu[i] * mu[i] + var - T(1) - logvar[i];
    out.grad_a[i] = mu[i] * inv;
    out.grad_b[i] = T(0.5) * (var - T(1)) * inv;
  }
  out.value = T(0.5) * sum * inv;
  return out;
}

// Mean over every element of (a - b)^2; grads (a, b).
template <std::floating_point T>
Loss2<T> mean_squared_error(std::span<const T> a, std::span<const T> b) {
  detail::require_same_size(a.size(), b.size(), "mean_squared_error");
  detail::require_nonempty(a.size(), "mean_squared_error");
  Loss2<T> out;
  const T inv = T(1) / static_cast<T>(a.size());
  out.grad_a.resize(a.size());
  out.grad_b.resize(a.size());
  T sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T diff = a[i] - b[i];
    sum += diff * diff;
    out.grad_a[i] = T(2) * diff * inv;
    out.grad_b[i] = -out.grad_a[i];
  }
  out.value = sum * inv;
  return out;
}

// Pixel reconstruction under a fixed-variance Gaussian likelihood, constant dropped.
template <std::floating_point T>
Loss2<T> recon_pixel_loss(std::span<const T> x, std::span<const T> x_recon) {
  return mean_squared_error(x, x_recon);
}

// Feature-wise reconstruction at discriminator layer l.
template <std::floating_point T>
Loss2<T> recon_feature_loss(std::span<const T> feat_x, std::span<const T> feat_recon) {
  return mean_squared_error(feat_x, feat_recon);
}

// Unit-variance Gaussian NLL of z_target under N(z_mean, I), constant dropped:
// mean over batch of 0.5 ||z_target - z_mean||^2. Grads (z_target, z_mean).
template <std::floating_point T>
Loss2<T> recognition_loss_z(std::span<const T> z_target, std::span<const T> z_mean, int batch) {
  detail::require_same_size(z_target.size(), z_mean.size(), "recognition_loss_z");
  if (batch < 1) throw InputError("recognition_loss_z: batch must be >= 1");
  Loss2<T> out;
  const T inv = T(1) / static_cast<T>(batch);
  out.grad_a.resize(z_target.size());
  out.grad_b.resize(z_target.size());
  T sum = 0;
  for (std::size_t i = 0; i < z_target.size(); ++i) {
    const T diff = z_target[i] - z_mean[i];
    sum += diff * diff;
    out.grad_a[i] = diff * inv;
    out.grad_b[i] = -diff * inv;
  }
  out.value = T(0.5) * sum * inv;
  return out;
}

// Bernoulli NLL per attribute, averaged over batch and attributes; grad w.r.t. logits.
template <std::floating_point T>
Loss1<T> recognition_loss_y(std::span<const T> y_true, std::span<const T> logits) {
  detail::require_same_size(y_true.size(), logits.size(), "recognition_loss_y");
  detail::require_nonempty(y_true.size(), "recognition_loss_y");
  Loss1<T> out;
  const T inv = T(1) / static_cast<T>(y_true.size());
  out.grad.resize(logits.size());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T y = y_true[i];
    if (y != T(0) && y != T(1)) throw InputError("recognition_loss_y: y_true must be binary");
    const T x = logits[i];
    sum += softplus(x) - y * x;
    out.grad[i] = (sigmoid(x) - y) * inv;
  }
  out.value = sum * inv;
  return out;
}

// Sum of the four z-recognition terms: (a) real data, (b) reconstruction path,
// (c) prior-generation path, (d) modification path.
double assemble_rg_z(double term_a, double term_b, double term_c, double term_d);
double assemble_rg_z(const std::array<double, 4>& terms, const std::array<double, 4>& weights);

// gan_g + lambda1 (rg_z + rg_y_g) + lambda2 recon_feature.
double assemble_generator_loss(double gan_g, double rg_z, double rg_y_g, double recon_feature,
                               double lambda1, double lambda2);

// gan_d + rg_y_d + rg_z.
double assemble_discriminator_loss(double gan_d, double rg_y_d, double rg_z);

// kl_prior + recon_pixel.
double encoder_loss(double kl_prior, double recon_pixel);

// Scalars recorded for one stage update.
struct LossReport {
  double gan_d = 0, gan_g = 0;
  double kl_prior = 0, recon_pixel = 0, recon_feature = 0;
  double rg_z = 0;
  std::array<double, 4> rg_z_terms{};  // a, b, c, d
  double rg_y_d = 0, rg_y_g = 0;
  std::array<double, 3> rg_y_g_terms{};  // i, ii, iii
  double total_enc = 0, total_dec = 0, total_disc = 0;

  // Flat (name, value) list in a fixed order; the metrics-log field order.
  std::vector<std::pair<std::string, double>> entries() const;
  // Name of the first non-finite scalar, or empty.
  std::string first_non_finite() const;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

}  // namespace slgan::losses
