#include "slgan/losses.hpp"

#include <cmath>

namespace slgan::losses {

GanGeneratorMode parse_gan_mode(std::string_view name) {
  if (name == "paper_minimax") return GanGeneratorMode::paper_minimax;
  if (name == "non_saturating") return GanGeneratorMode::non_saturating;
  throw ConfigError("unknown generator GAN mode '" + std::string(name) +
                    "' (expected paper_minimax or non_saturating)");
}

std::string_view to_string(GanGeneratorMode mode) {
  switch (mode) {
    case GanGeneratorMode::paper_minimax:
      return "paper_minimax";
    case GanGeneratorMode::non_saturating:
      return "non_saturating";
  }
  throw ConfigError("unknown generator GAN mode");
}

double assemble_rg_z(double term_a, double term_b, double term_c, double term_d) {
  return term_a + term_b + term_c + term_d;
}

double assemble_rg_z(const std::array<double, 4>& terms, const std::array<double, 4>& weights) {
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) sum += weights[i] * terms[i];
  return sum;
}

double assemble_generator_loss(double gan_g, double rg_z, double rg_y_g, double recon_feature,
                               double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("lambda1 and lambda2 must be >= 0");
  return gan_g + lambda1 * (rg_z + rg_y_g) + lambda2 * recon_feature;
}

double assemble_discriminator_loss(double gan_d, double rg_y_d, double rg_z) {
  return gan_d + rg_y_d + rg_z;
}

double encoder_loss(double kl_prior, double recon_pixel) { return kl_prior + recon_pixel; }

std::vector<std::pair<std::string, double>> LossReport::entries() const {
  return {
      {"gan_d", gan_d},
      {"gan_g", gan_g},
      {"kl_prior", kl_prior},
      {"recon_pixel", recon_pixel},
      {"recon_feature", recon_feature},
      {"rg_z", rg_z},
      {"rg_z_a", rg_z_terms[0]},
      {"rg_z_b", rg_z_terms[1]},
      {"rg_z_c", rg_z_terms[2]},
      {"rg_z_d", rg_z_terms[3]},
      {"rg_y_d", rg_y_d},
      {"rg_y_g", rg_y_g},
      {"rg_y_g_i", rg_y_g_terms[0]},
      {"rg_y_g_ii", rg_y_g_terms[1]},
      {"rg_y_g_iii", rg_y_g_terms[2]},
      {"total_enc", total_enc},
      {"total_dec", total_dec},
      {"total_disc", total_disc},
  };
}

std::string LossReport::first_non_finite() const {
  for (const auto& [name, value] : entries())
    if (!std::isfinite(value)) return name;
  return {};
}

}  // namespace slgan::losses
