// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
// The desk-scale run is cached in --work-dir and reused when its config matches.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "slgan/checkpoint.hpp"
#include "slgan/data.hpp"
#include "slgan/error.hpp"
#include "slgan/eval.hpp"
#include "slgan/hash.hpp"
#include "slgan/image_io.hpp"
#include "slgan/losses.hpp"
#include "slgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace slgan;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok " : "FAILED ") + what);
  }
};

std::string num(double v) { return eval::format_number(v); }

// ------------------------------------------------------------ loss oracles

Verdict loss_oracles() {
  Verdict v;
  const auto t0 = Clock::now();
  auto near = [&](double got, double want, const std::string& what) {
    v.check(std::abs(got - want) <= 1e-6, what + " = " + num(got) + " (want " + num(want) + ")");
  };
  const std::vector<double> one{1.0}, zero{0.0};
  near(losses::kl_prior_loss<double>(one, zero, 1).value, 0.5, "kl(mu=1, sigma=1)");
  near(losses::recognition_loss_y<double>(one, zero).value, std::log(2.0), "bce(logit 0)");
  near(losses::gan_loss_d<double>(zero, zero).value, 2 * std::log(2.0), "gan_d(sigma=0.5)");
  const std::vector<double> a(12, 0.0), b(12, 0.5);
  near(losses::mean_squared_error<double>(a, b).value, 0.25, "mse(offset 0.5)");
  near(eval::compare_images(Tensor({1, 3, 2, 2}, 0.0f), Tensor({1, 3, 2, 2}, 0.5f)).mean_mse, 0.25,
       "image mse(offset 0.5)");

  const int c = eval::kArchetypeCount;
  Tensor onehot({8 * c, c});
  for (int i = 0; i < 8 * c; ++i) onehot[static_cast<std::size_t>(i * c + i % c)] = 1.0f;
  near(eval::inception_score(onehot, 8).mean, c, "is(one-hot uniform)");
  near(eval::inception_score(Tensor({40, c}, 1.0f / c), 4).mean, 1.0, "is(constant)");
  const double t = seconds_since(t0);
  v.check(t < 1.0, "runtime " + num(t) + " s < 1 s");
  return v;
}

// --------------------------------------------------------------- gradients

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

template <typename F>
double fd(F f, std::vector<double> x, std::size_t i) {
  const double h = 1e-4;
  x[i] += h;
  const double up = f(x);
  x[i] -= 2 * h;
  return (up - f(x)) / (2 * h);
}

Verdict gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  constexpr int kTrials = 20;
  std::map<std::string, std::pair<int, double>> worst;  // op -> (trials, max rel err)

  auto randn = [&](std::size_t n, double s) {
    std::vector<double> x(n);
    for (auto& e : x) e = s * n01(rng);
    return x;
  };
  auto record = [&](const std::string& op, const std::vector<double>& analytic, auto f,
                    const std::vector<double>& at) {
    double m = 0;
    for (std::size_t i = 0; i < at.size(); ++i) m = std::max(m, rel_err(analytic[i], fd(f, at, i)));
    auto& w = worst[op];
    ++w.first;
    w.second = std::max(w.second, m);
  };

  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 5);
    const auto r = randn(n, 2.0), f = randn(n + 1, 2.0);
    {
      const auto L = losses::gan_loss_d<double>(r, f);
      record("gan_d/real", L.grad_a, [&](const auto& x) { return losses::gan_loss_d<double>(x, f).value; }, r);
      record("gan_d/fake", L.grad_b, [&](const auto& x) { return losses::gan_loss_d<double>(r, x).value; }, f);
    }
    for (auto mode : {losses::GanGeneratorMode::paper_minimax, losses::GanGeneratorMode::non_saturating}) {
      const auto L = losses::gan_loss_g<double>(f, mode);
      record("gan_g/" + std::string(losses::to_string(mode)), L.grad,
             [&](const auto& x) { return losses::gan_loss_g<double>(x, mode).value; }, f);
    }
    const int batch = 1 + trial % 3;
    const auto mu = randn(n * batch, 1.0), lv = randn(n * batch, 1.0);
    {
      const auto L = losses::kl_prior_loss<double>(mu, lv, batch);
      record("kl/mu", L.grad_a, [&](const auto& x) { return losses::kl_prior_loss<double>(x, lv, batch).value; }, mu);
      record("kl/logvar", L.grad_b, [&](const auto& x) { return losses::kl_prior_loss<double>(mu, x, batch).value; }, lv);
    }
    {
      const auto L = losses::recon_pixel_loss<double>(mu, lv);
      record("recon_pixel/x", L.grad_a, [&](const auto& x) { return losses::recon_pixel_loss<double>(x, lv).value; }, mu);
      record("recon_pixel/recon", L.grad_b, [&](const auto& x) { return losses::recon_pixel_loss<double>(mu, x).value; }, lv);
      const auto F = losses::recon_feature_loss<double>(mu, lv);
      record("recon_feature/recon", F.grad_b, [&](const auto& x) { return losses::recon_feature_loss<double>(mu, x).value; }, lv);
    }
    {
      const auto L = losses::recognition_loss_z<double>(mu, lv, batch);
      record("rg_z/target", L.grad_a, [&](const auto& x) { return losses::recognition_loss_z<double>(x, lv, batch).value; }, mu);
      record("rg_z/mean", L.grad_b, [&](const auto& x) { return losses::recognition_loss_z<double>(mu, x, batch).value; }, lv);
    }
    {
      std::vector<double> y(n * batch);
      for (auto& e : y) e = coin(rng) ? 1.0 : 0.0;
      const auto logits = randn(n * batch, 3.0);
      const auto L = losses::recognition_loss_y<double>(y, logits);
      record("rg_y/logits", L.grad, [&](const auto& x) { return losses::recognition_loss_y<double>(y, x).value; }, logits);
    }
  }
  for (const auto& [op, w] : worst)
    v.check(w.first >= kTrials && w.second < 1e-4,
            op + " trials=" + std::to_string(w.first) + " max_rel=" + num(w.second));
  const double t = seconds_since(t0);
  v.check(t < 60.0, "runtime " + num(t) + " s < 60 s");
  return v;
}

// ------------------------------------------------------------ stage wiring

std::set<int> nonzero(std::span<const double> terms) {
  std::set<int> s;
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (terms[i] != 0.0) s.insert(static_cast<int>(i));
  return s;
}

std::string names(const std::set<int>& s, const std::vector<std::string>& labels) {
  std::string out;
  for (int i : s) out += (out.empty() ? "" : "+") + labels[static_cast<std::size_t>(i)];
  return out.empty() ? "none" : out;
}

Verdict stage_wiring() {
  Verdict v;
  const auto t0 = Clock::now();
  TrainConfig c;
  c.batch_size = 8;
  c.seed = 5;
  const Model model(c.model_config());
  const data::Dataset ds = data::sample_dataset(64, 17, c.image_size);
  TrainState s = init_state(c, ds.manifest.attribute_names, ds.labels);
  std::mt19937_64 rng(3);
  std::vector<int> i1{0, 1, 2, 3, 4, 5, 6, 7}, i2{8, 9, 10, 11, 12, 13, 14, 15};
  const auto x1 = ds.image_batch(i1), x2 = ds.image_batch(i2);
  const auto y1 = ds.label_batch(i1), y2 = ds.label_batch(i2);
  data::AttributeMarginal marginal(ds.labels);
  const auto y_random = marginal.sample_batch(8, rng);
  const auto y_sampled = marginal.sample_batch(8, rng);
  const Tensor noise = standard_normal(8, c.latent_dim, rng);
  const LatentBatch z{standard_normal(8, c.latent_dim, rng)};

  auto check_stage = [&](const std::string& stage, const losses::LossReport& r, std::set<int> want_z,
                         std::set<int> want_y, bool feature) {
    const auto gz = nonzero(r.rg_z_terms), gy = nonzero(r.rg_y_g_terms);
    v.check(gz == want_z && gy == want_y && (r.recon_feature != 0) == feature && r.rg_y_d != 0,
            stage + ": rg_z " + names(gz, {"a", "b", "c", "d"}) + ", rg_y_g " + names(gy, {"i", "ii", "iii"}) +
                ", recon_feature " + (r.recon_feature != 0 ? "on" : "off"));
  };

  const std::string enc0 = param_hash(s.params.encoder);
  check_stage("reconstruction", stage_reconstruction_step(model, s, x1, y1, noise), {0, 1}, {1}, true);
  const std::string enc1 = param_hash(s.params.encoder);
  v.check(enc1 != enc0, "reconstruction updates the encoder");
  check_stage("modification", stage_modification_step(model, s, x1, y1, y_random, noise), {3}, {0}, true);
  const std::string enc2 = param_hash(s.params.encoder);
  check_stage("generation", stage_generation_step(model, s, x2, y2, z, y_sampled), {2}, {2}, false);
  const std::string enc3 = param_hash(s.params.encoder);
  v.check(enc1 == enc2 && enc2 == enc3,
          "encoder hash unchanged by modification and generation (" + enc3.substr(0, 12) + ")");
  const double t = seconds_since(t0);
  v.check(t < 60.0, "runtime " + num(t) + " s < 60 s");
  return v;
}

// ------------------------------------------------------------ overfit gate

Verdict overfit() {
  Verdict v;
  const auto t0 = Clock::now();
  TrainConfig c;
  c.batch_size = 8;
  c.seed = 9;
  const Model model(c.model_config());
  const data::Dataset ds = data::sample_dataset(8, 31, c.image_size);
  TrainState s = init_state(c, ds.manifest.attribute_names, ds.labels);
  const ImageBatch x{ds.images};
  const AttributeBatch y{ds.labels};
  double first = 0, last = 0;
  for (int step = 0; step < 200; ++step) {
    const Tensor noise = standard_normal(8, c.latent_dim, s.rng);
    const auto r = stage_reconstruction_step(model, s, x, y, noise);
    if (step == 0) first = r.recon_pixel;
    last = r.recon_pixel;
  }
  v.check(last * 10.0 <= first, "recon_pixel " + num(first) + " -> " + num(last) + " (x" +
                                    num(first / last) + ", need >= 10)");
  const double t = seconds_since(t0);
  v.check(t < 300.0, "runtime " + num(t) + " s < 300 s");
  return v;
}

// ------------------------------------------------------ desk-scale training

constexpr std::uint64_t kDeskDataSeed = 1;
constexpr int kDeskImages = 10000;

TrainConfig desk_config() {
  TrainConfig c;  // K=6, S=32, d=64, N=64, seed 1
  c.iterations = 3000;
  c.checkpoint_interval = 500;
  return c;
}

bool same_training(const TrainConfig& a, const TrainConfig& b) {
  TrainConfig x = a, y = b;
  x.checkpoint_interval = y.checkpoint_interval = 0;
  return x == y;
}

// Loads a cached checkpoint if it matches the desk config at the given iteration.
std::optional<TrainState> cached(const fs::path& p, std::int64_t iteration) {
  if (!fs::exists(p)) return std::nullopt;
  try {
    TrainState s = load_checkpoint(p);
    if (s.iteration == iteration && same_training(s.config, desk_config())) return s;
  } catch (const std::exception& e) {
    std::cerr << "ignoring cached " << p << ": " << e.what() << '\n';
  }
  return std::nullopt;
}

data::Dataset desk_dataset(const fs::path& dir) {
  // Same path as `slgan synth` + `slgan train`: render, write PNGs, load from disk.
  const fs::path table = dir / data::kAttributeTableName;
  if (!fs::exists(table)) {
    const data::Dataset ds = data::sample_dataset(kDeskImages, kDeskDataSeed, 32);
    data::save_dataset(ds, dir);
  }
  return data::load_image_directory(dir, table);
}

struct DeskResult {
  Verdict main;
  Verdict d_health;
  Verdict glasses;
};

DeskResult desk_scale(const fs::path& work) {
  DeskResult out;
  Verdict& v = out.main;
  const auto t0 = Clock::now();
  const data::Dataset ds = desk_dataset(work / "data");
  const fs::path run = work / "run";
  fs::create_directories(run);

  std::optional<TrainState> final_state = cached(run / "final.slgan", 3000);
  double train_seconds = 0;
  if (!final_state) {
    std::cerr << "training desk-scale model (3000 iterations)\n";
    const auto tt = Clock::now();
    std::ofstream metrics(run / "metrics.log");
    TrainOptions opt;
    opt.metrics = &metrics;
    opt.checkpoint_dir = run;
    opt.on_iteration = [](const TrainState&, const IterationReport& r) {
      if (r.iteration % 250 == 0)
        std::cerr << "  iteration " << r.iteration << " recon_pixel=" << num(r.reconstruction.recon_pixel)
                  << '\n';
    };
    final_state = train(desk_config(), ds, opt);
    train_seconds = seconds_since(tt);
  } else {
    std::cerr << "reusing cached desk-scale checkpoint " << (run / "final.slgan") << '\n';
  }
  const TrainState& s = *final_state;
  const Model model(s.config.model_config());

  const fs::path probe_path = work / "probe.slgan";
  std::optional<eval::ProbeClassifier> probe;
  if (fs::exists(probe_path)) {
    try {
      probe = eval::ProbeClassifier::load(probe_path);
    } catch (const std::exception&) {
    }
  }
  if (!probe) {
    std::cerr << "training probe classifier\n";
    probe = eval::train_probe(ds, 7);
    probe->save(probe_path);
  }
  v.check(probe->gate_min() >= eval::kProbeGate,
          "probe gate: min held-out accuracy " + num(probe->gate_min()) + " >= 0.99");

  eval::EvaluationOptions eo;
  eo.generated_count = 1000;
  eo.flip_trials = 200;
  const auto sum = eval::evaluate(model, s.params, s.attribute_names, s.attribute_rows, ds, *probe, eo);
  {
    std::ofstream report(work / "report.txt");
    for (const auto& line : sum.records) report << line << '\n';
  }
  v.check(sum.generated_error.mean < 0.15,
          "(a) attribute error of " + std::to_string(sum.generated_error.count) +
              " generated images " + num(sum.generated_error.mean) + " < 0.15");
  v.check(sum.flip.flip_rate >= 0.8 && sum.flip.others_unchanged >= 0.8,
          "(b) flip rate " + num(sum.flip.flip_rate) + " >= 0.8, others unchanged " +
              num(sum.flip.others_unchanged) + " >= 0.8 over " + std::to_string(sum.flip.trials) +
              " test images");
  v.check(sum.recon_ratio <= 1.5, "(c) recon mse test/train " + num(sum.recon_test.mean_mse) + "/" +
                                      num(sum.recon_train.mean_mse) + " = " + num(sum.recon_ratio) +
                                      " <= 1.5");
  v.check(sum.inception.mean > 1.5 && sum.inception.mean <= 8.0 + 1e-9,
          "(d) inception score " + num(sum.inception.mean) + " > 1.5 (in [1, 8])");
  const double t = seconds_since(t0);
  v.notes.push_back("info training " + num(train_seconds) + " s (0 = cached), total " + num(t) + " s");

  // Training health: D accuracy on real vs generated at iteration 500.
  std::optional<TrainState> s500 = cached(run / checkpoint_file_name(500), 500);
  if (!s500) {
    out.d_health.check(false, "checkpoint at iteration 500 missing");
  } else {
    const auto te = ds.manifest.test;
    const Tensor real = ds.images.rows(te.begin, te.begin + 500);
    const auto [fake, y] = eval::generate_from_marginal(model, s500->params, s500->attribute_rows, 500, 3);
    const double acc = eval::discriminator_accuracy(model, s500->params, real, fake);
    out.d_health.check(acc > 0.5 && acc < 1.0, "D accuracy at iteration 500 " + num(acc) + " in (0.5, 1)");
  }

  // Glasses bit set vs cleared, 200 samples each.
  {
    const int g = 2;
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> pick(0, s.attribute_rows.dim(0) - 1);
    const int k = s.config.attribute_count;
    Tensor y_on({200, k}), y_off({200, k});
    for (int i = 0; i < 200; ++i) {
      const int r = pick(rng);
      for (int j = 0; j < k; ++j) {
        const float b = s.attribute_rows[static_cast<std::size_t>(r * k + j)];
        y_on[static_cast<std::size_t>(i * k + j)] = j == g ? 1.0f : b;
        y_off[static_cast<std::size_t>(i * k + j)] = j == g ? 0.0f : b;
      }
    }
    const Tensor z = standard_normal(200, s.config.latent_dim, rng);
    auto rate = [&](const Tensor& y) {
      const Tensor bits =
          probe->predict_bits(model.decode(s.params, LatentBatch{z}, AttributeBatch{y}).pixels);
      double on = 0;
      for (int i = 0; i < 200; ++i) on += bits[static_cast<std::size_t>(i * k + g)];
      return on / 200.0;
    };
    const double on = rate(y_on), off = rate(y_off);
    out.glasses.check(on - off >= 0.6, "glasses rate set " + num(on) + " vs cleared " + num(off) +
                                           ", difference " + num(on - off) + " >= 0.6");
  }
  return out;
}

// --------------------------------------------------- determinism/persistence

Verdict determinism(const fs::path& work) {
  Verdict v;
  TrainConfig c;
  c.image_size = 16;
  c.latent_dim = 8;
  c.batch_size = 8;
  c.iterations = 6;
  c.checkpoint_interval = 3;
  c.seed = 21;
  const data::Dataset ds = data::sample_dataset(120, 4, 16);

  auto run = [&](const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ostringstream log;
    TrainOptions o;
    o.metrics = &log;
    o.checkpoint_dir = dir;
    std::vector<losses::LossReport> reports;
    o.on_iteration = [&](const TrainState&, const IterationReport& r) {
      reports.push_back(r.reconstruction);
      reports.push_back(r.modification);
      reports.push_back(r.generation);
    };
    TrainState s = train(c, ds, o);
    return std::make_tuple(log.str(), reports, s);
  };
  const auto [log1, rep1, s1] = run(work / "det1");
  const auto [log2, rep2, s2] = run(work / "det2");
  v.check(!log1.empty() && log1 == log2, "identical metrics logs (" + std::to_string(log1.size()) + " bytes)");

  TrainState resumed = load_checkpoint(work / "det1" / checkpoint_file_name(3));
  std::vector<losses::LossReport> tail;
  TrainOptions o;
  o.on_iteration = [&](const TrainState&, const IterationReport& r) {
    tail.push_back(r.reconstruction);
    tail.push_back(r.modification);
    tail.push_back(r.generation);
  };
  train(resumed, ds, o);
  const std::vector<losses::LossReport> want(rep1.begin() + 9, rep1.end());
  v.check(tail == want && resumed.params == s1.params,
          "resume from iteration 3 reproduces iterations 4-6 LossReports and final parameters");

  const std::string bytes = serialize_checkpoint(s1);
  const std::string again = serialize_checkpoint(deserialize_checkpoint(bytes));
  const auto disk = read_file_bytes(work / "det1" / "final.slgan");
  v.check(bytes == again && std::string(disk.begin(), disk.end()) == bytes,
          "checkpoint round trip byte-identical (" + std::to_string(bytes.size()) + " bytes, sha256 " +
              sha256_hex(bytes).substr(0, 12) + ")");
  fs::remove_all(work / "det1");
  fs::remove_all(work / "det2");
  return v;
}

// ------------------------------------------------------------ format suite

std::string load_diagnostics(const fs::path& dir) {
  try {
    data::load_image_directory(dir, dir / data::kAttributeTableName);
  } catch (const data::DatasetLoadError& e) {
    std::string all;
    for (const auto& d : e.diagnostics()) all += d + "; ";
    return all;
  }
  return "";
}

Verdict formats(const fs::path& work) {
  Verdict v;
  const fs::path dir = work / "format";
  fs::remove_all(dir);
  const data::Dataset ds = data::sample_dataset(200, 12, 32);
  data::save_dataset(ds, dir);
  const data::Dataset back = data::load_image_directory(dir, dir / data::kAttributeTableName);
  v.check(back.images == ds.images && back.labels == ds.labels &&
              back.manifest.attribute_names == ds.manifest.attribute_names,
          "synthetic dataset round trip lossless (200 images, K=6)");

  const fs::path table = dir / data::kAttributeTableName;
  const std::string good = [&] {
    std::ifstream in(table, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  auto with_table = [&](const std::string& text) {
    std::ofstream(table, std::ios::binary | std::ios::trunc) << text;
    return load_diagnostics(dir);
  };
  const std::size_t eol = good.find('\n');
  std::string bad_header = "filename,skin_dark,skin_dark" + good.substr(good.find(",hair_dark"));
  const std::string d1 = with_table(bad_header);
  v.check(!d1.empty() && d1.find("skin_dark") != std::string::npos, "duplicate header column: " + d1.substr(0, 80));
  std::string bad_cell = good;
  const std::size_t row1 = eol + 1;
  bad_cell[good.find(',', row1) + 1] = '7';
  const std::string d2 = with_table(bad_cell);
  v.check(!d2.empty() && d2.find("000000.png") != std::string::npos, "non-binary cell: " + d2.substr(0, 80));
  std::string missing = good + "999999.png,0,0,0,0,0,0\n";
  const std::string d3 = with_table(missing);
  v.check(!d3.empty() && d3.find("999999.png") != std::string::npos, "missing image: " + d3.substr(0, 80));
  with_table(good);
  std::ofstream(dir / "000001.png", std::ios::binary | std::ios::trunc) << "garbage";
  const std::string d4 = load_diagnostics(dir);
  v.check(!d4.empty() && d4.find("000001.png") != std::string::npos, "undecodable image: " + d4.substr(0, 80));

  TrainConfig c;
  c.image_size = 16;
  c.latent_dim = 8;
  const TrainState s = init_state(c, data::synthetic_attribute_names(), ds.labels);
  const std::string bytes = serialize_checkpoint(s);
  const fs::path ck = dir / "t.slgan";
  int detected = 0, tried = 0;
  std::string example;
  for (double frac : {0.0, 0.01, 0.25, 0.5, 0.75, 0.999}) {
    ++tried;
    std::ofstream(ck, std::ios::binary | std::ios::trunc)
        << bytes.substr(0, static_cast<std::size_t>(frac * static_cast<double>(bytes.size())));
    try {
      load_checkpoint(ck);
    } catch (const IntegrityError& e) {
      ++detected;
      example = e.what();
    } catch (...) {
    }
  }
  v.check(detected == tried, "truncated checkpoints -> integrity error " + std::to_string(detected) + "/" +
                                 std::to_string(tried) + " (" + example + ")");
  v.notes.push_back("ok acceptance binary links only the core library (no UI component)");
  fs::remove_all(dir);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gate"};
  std::string work = "acceptance-work";
  std::vector<std::string> only;
  app.add_option("--work-dir", work, "Cache for the desk-scale run and probe");
  app.add_option("--only", only, "Run only these suites")
      ->check(CLI::IsMember({"losses", "gradients", "wiring", "overfit", "desk", "determinism", "formats"}));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  auto wanted = [&](const std::string& name) {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };
  int failures = 0;
  auto report = [&](const std::string& name, const Verdict& v) {
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << '\n';
    for (const auto& n : v.notes) std::cout << "     " << n << '\n';
    std::cout.flush();
    if (!v.pass) ++failures;
  };
  auto guarded = [&](const std::string& name, const std::function<Verdict()>& f) {
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    report(name, v);
  };

  if (wanted("losses")) guarded("loss-oracle suite", loss_oracles);
  if (wanted("gradients")) guarded("gradient suite", gradients);
  if (wanted("wiring")) guarded("stage-wiring suite", stage_wiring);
  if (wanted("overfit")) guarded("overfit gate", overfit);
  if (wanted("desk")) {
    try {
      const DeskResult r = desk_scale(work);
      report("desk-scale training gate", r.main);
      report("training health (supplementary)", r.d_health);
      report("glasses control (supplementary)", r.glasses);
    } catch (const std::exception& e) {
      Verdict v;
      v.check(false, std::string("exception: ") + e.what());
      report("desk-scale training gate", v);
    }
  }
  if (wanted("determinism")) guarded("determinism and persistence", [&] { return determinism(work); });
  if (wanted("formats")) guarded("format suite", [&] { return formats(work); });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << '\n';
  return failures == 0 ? 0 : 1;
}
