#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "slgan/losses.hpp"

using namespace slgan;
using namespace slgan::losses;

namespace {

// Reference implementations written straight from the definitions, per element, 64-bit.
double ref_log_sigmoid(double x) { return -std::log1p(std::exp(-x)); }
double ref_log_one_minus_sigmoid(double x) { return -std::log1p(std::exp(x)); }

double ref_gan_d(const std::vector<double>& r, const std::vector<double>& f) {
  double a = 0, b = 0;
  for (double v : r) a += -ref_log_sigmoid(v);
  for (double v : f) b += -ref_log_one_minus_sigmoid(v);
  return a / r.size() + b / f.size();
}

double ref_bce(const std::vector<double>& y, const std::vector<double>& logits) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    s += -(y[i] * std::log(p) + (1 - y[i]) * std::log(1 - p));
  }
  return s / y.size();
}

double ref_mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / a.size();
}

std::vector<double> randn(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<double> random_bits(std::mt19937_64& rng, std::size_t n) {
  std::bernoulli_distribution b(0.5);
  std::vector<double> v(n);
  for (double& x : v) x = b(rng) ? 1.0 : 0.0;
  return v;
}

// Central difference of f at v[i], step 1e-3.
template <typename F>
double fd(F f, std::vector<double> v, std::size_t i) {
  const double h = 1e-3;
  v[i] += h;
  const double up = f(v);
  v[i] -= 2 * h;
  const double down = f(v);
  return (up - down) / (2 * h);
}

void check_grad(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    CHECK(std::abs(analytic[i] - numeric[i]) / scale < 1e-4);
  }
}

}  // namespace

TEST_CASE("gan_loss_d closed forms and reference") {
  std::vector<double> zero{0.0};
  CHECK(gan_loss_d<double>(zero, zero).value == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  std::vector<double> big{60.0}, small{-60.0};
  CHECK(gan_loss_d<double>(big, small).value < 1e-20);
  std::mt19937_64 rng(3);
  const auto r = randn(rng, 16, 3), f = randn(rng, 16, 3);
  CHECK(std::abs(gan_loss_d<double>(r, f).value - ref_gan_d(r, f)) < 1e-6);
}

TEST_CASE("gan_loss_g modes") {
  std::vector<double> zero{0.0};
  CHECK(gan_loss_g<double>(zero, GanGeneratorMode::paper_minimax).value ==
        doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(gan_loss_g<double>(zero, GanGeneratorMode::non_saturating).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  std::vector<double> fooled{60.0};
  CHECK(gan_loss_g<double>(fooled, GanGeneratorMode::non_saturating).value < 1e-20);
  CHECK_THROWS_AS(parse_gan_mode("wasserstein"), ConfigError);
  CHECK(parse_gan_mode("paper_minimax") == GanGeneratorMode::paper_minimax);
  CHECK(to_string(GanGeneratorMode::non_saturating) == "non_saturating");
}

TEST_CASE("kl_prior_loss closed forms") {
  std::vector<double> mu{1.0}, lv{0.0};
  CHECK(kl_prior_loss<double>(mu, lv, 1).value == doctest::Approx(0.5).epsilon(1e-12));
  std::vector<double> mu0{0.0}, lv4{std::log(4.0)};
  CHECK(kl_prior_loss<double>(mu0, lv4, 1).value ==
        doctest::Approx(0.5 * (4 - 1 - std::log(4.0))).epsilon(1e-12));
  std::vector<double> z(8, 0.0);
  CHECK(kl_prior_loss<double>(z, z, 2).value == 0.0);
}

TEST_CASE("reconstruction losses") {
  std::mt19937_64 rng(5);
  const auto x = randn(rng, 4 * 3 * 4 * 4);
  auto shifted = x;
  for (double& v : shifted) v += 0.5;
  CHECK(recon_pixel_loss<double>(x, x).value == 0.0);
  CHECK(recon_pixel_loss<double>(x, shifted).value == doctest::Approx(0.25).epsilon(1e-12));
  const auto y = randn(rng, x.size());
  CHECK(std::abs(recon_pixel_loss<double>(x, y).value - ref_mse(x, y)) < 1e-6);
  auto plus_one = x;
  for (double& v : plus_one) v += 1.0;
  CHECK(recon_feature_loss<double>(x, plus_one).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(recon_feature_loss<double>(x, y).value - ref_mse(x, y)) < 1e-6);
  std::vector<double> short_v(3);
  CHECK_THROWS_AS(recon_pixel_loss<double>(x, short_v), InputError);
}

TEST_CASE("recognition losses") {
  std::vector<double> t{1.0, 1.0}, m{0.0, 0.0};
  CHECK(recognition_loss_z<double>(t, m, 1).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(recognition_loss_z<double>(t, t, 1).value == 0.0);

  std::vector<double> y{1, 0, 1}, sure{50, -50, 50}, zeros(3, 0.0);
  CHECK(recognition_loss_y<double>(y, sure).value <= 1e-6);
  CHECK(recognition_loss_y<double>(y, zeros).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  std::mt19937_64 rng(9);
  const auto y17 = random_bits(rng, 17), l17 = randn(rng, 17, 2);
  CHECK(std::abs(recognition_loss_y<double>(y17, l17).value - ref_bce(y17, l17)) < 1e-6);
  std::vector<double> bad{0.5};
  std::vector<double> one{0.0};
  CHECK_THROWS_AS(recognition_loss_y<double>(bad, one), InputError);
}

TEST_CASE("assembly arithmetic") {
  CHECK(assemble_rg_z(0, 0, 0, 0) == 0.0);
  CHECK(assemble_rg_z(1, 2, 3, 4) == 10.0);
  CHECK(assemble_generator_loss(1, 2, 3, 4, 0, 0) == 1.0);
  CHECK(assemble_generator_loss(1, 2, 3, 4, 1, 1) == 10.0);
  CHECK(assemble_generator_loss(1, 2, 3, 4, 0.5, 2) == 11.5);
  CHECK_THROWS_AS(assemble_generator_loss(1, 2, 3, 4, -1, 1), ConfigError);
  CHECK_THROWS_AS(assemble_generator_loss(1, 2, 3, 4, 1, -1), ConfigError);
  CHECK(assemble_discriminator_loss(1, 2, 3) == 6.0);
  CHECK(assemble_discriminator_loss(1.25, 0, 0) == 1.25);
  CHECK(encoder_loss(0, 0) == 0.0);
  CHECK(encoder_loss(0.5, 0.25) == 0.75);
}

TEST_CASE("assembly is linear in its parts") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng), l1 = u(rng), l2 = u(rng);
    const double k = u(rng);
    CHECK(assemble_generator_loss(k * a, k * b, k * c, k * d, l1, l2) ==
          doctest::Approx(k * assemble_generator_loss(a, b, c, d, l1, l2)).epsilon(1e-12));
    CHECK(assemble_discriminator_loss(k * a, k * b, k * c) ==
          doctest::Approx(k * assemble_discriminator_loss(a, b, c)).epsilon(1e-12));
    CHECK(assemble_rg_z(k * a, k * b, k * c, k * d) ==
          doctest::Approx(k * assemble_rg_z(a, b, c, d)).epsilon(1e-12));
    CHECK(encoder_loss(k * a, k * b) == doctest::Approx(k * encoder_loss(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = randn(rng, 5, 2), f = randn(rng, 6, 2);
    const auto gd = gan_loss_d<double>(r, f);
    std::vector<double> num_r, num_f;
    for (std::size_t i = 0; i < r.size(); ++i)
      num_r.push_back(fd([&](const auto& v) { return gan_loss_d<double>(v, f).value; }, r, i));
    for (std::size_t i = 0; i < f.size(); ++i)
      num_f.push_back(fd([&](const auto& v) { return gan_loss_d<double>(r, v).value; }, f, i));
    check_grad(gd.grad_a, num_r);
    check_grad(gd.grad_b, num_f);

    for (auto mode : {GanGeneratorMode::paper_minimax, GanGeneratorMode::non_saturating}) {
      const auto gg = gan_loss_g<double>(f, mode);
      std::vector<double> num;
      for (std::size_t i = 0; i < f.size(); ++i)
        num.push_back(fd([&](const auto& v) { return gan_loss_g<double>(v, mode).value; }, f, i));
      check_grad(gg.grad, num);
    }

    const auto mu = randn(rng, 6), lv = randn(rng, 6);
    const auto kl = kl_prior_loss<double>(mu, lv, 2);
    std::vector<double> num_mu, num_lv;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      num_mu.push_back(fd([&](const auto& v) { return kl_prior_loss<double>(v, lv, 2).value; }, mu, i));
      num_lv.push_back(fd([&](const auto& v) { return kl_prior_loss<double>(mu, v, 2).value; }, lv, i));
    }
    check_grad(kl.grad_a, num_mu);
    check_grad(kl.grad_b, num_lv);

    const auto a = randn(rng, 8), b = randn(rng, 8);
    for (auto loss : {&recon_pixel_loss<double>, &recon_feature_loss<double>}) {
      const auto l = loss(a, b);
      std::vector<double> na, nb;
      for (std::size_t i = 0; i < a.size(); ++i) {
        na.push_back(fd([&](const auto& v) { return loss(v, b).value; }, a, i));
        nb.push_back(fd([&](const auto& v) { return loss(a, v).value; }, b, i));
      }
      check_grad(l.grad_a, na);
      check_grad(l.grad_b, nb);
    }

    const auto rz = recognition_loss_z<double>(a, b, 2);
    std::vector<double> nza, nzb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      nza.push_back(fd([&](const auto& v) { return recognition_loss_z<double>(v, b, 2).value; }, a, i));
      nzb.push_back(fd([&](const auto& v) { return recognition_loss_z<double>(a, v, 2).value; }, b, i));
    }
    check_grad(rz.grad_a, nza);
    check_grad(rz.grad_b, nzb);

    const auto y = random_bits(rng, 7), logits = randn(rng, 7, 2);
    const auto ry = recognition_loss_y<double>(y, logits);
    std::vector<double> ny;
    for (std::size_t i = 0; i < y.size(); ++i)
      ny.push_back(fd([&](const auto& v) { return recognition_loss_y<double>(y, v).value; }, logits, i));
    check_grad(ry.grad, ny);
  }
}

TEST_CASE("losses are non-negative and finite at extreme logits") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = randn(rng, 8, 5), f = randn(rng, 8, 5);
    CHECK(gan_loss_d<double>(r, f).value >= 0.0);
    CHECK(gan_loss_g<double>(f, GanGeneratorMode::non_saturating).value >= 0.0);
    CHECK(gan_loss_g<double>(f, GanGeneratorMode::paper_minimax).value <= 0.0);
    CHECK(kl_prior_loss<double>(r, f, 2).value >= 0.0);
    CHECK(recognition_loss_y<double>(random_bits(rng, 8), r).value >= 0.0);
  }
  std::vector<double> ext{1e4, -1e4, 1e4, -1e4};
  std::vector<double> bits{0, 1, 1, 0};
  CHECK(std::isfinite(gan_loss_d<double>(ext, ext).value));
  CHECK(std::isfinite(gan_loss_g<double>(ext, GanGeneratorMode::paper_minimax).value));
  CHECK(std::isfinite(gan_loss_g<double>(ext, GanGeneratorMode::non_saturating).value));
  CHECK(std::isfinite(recognition_loss_y<double>(bits, ext).value));
  for (double g : recognition_loss_y<double>(bits, ext).grad) CHECK(std::isfinite(g));
  for (double g : gan_loss_d<double>(ext, ext).grad_a) CHECK(std::isfinite(g));
  std::vector<float> extf{1e4f, -1e4f};
  CHECK(std::isfinite(gan_loss_d<float>(extf, extf).value));
}

TEST_CASE("LossReport entries and finiteness") {
  LossReport r;
  r.rg_z_terms = {1, 2, 3, 4};
  const auto e = r.entries();
  REQUIRE(e.size() == 18);
  CHECK(e.front().first == "gan_d");
  CHECK(e.back().first == "total_disc");
  CHECK(r.first_non_finite().empty());
  r.rg_y_d = std::nan("");
  CHECK(r.first_non_finite() == "rg_y_d");
}
