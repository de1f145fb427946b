#include "slgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "slgan/checkpoint.hpp"
#include "slgan/error.hpp"
#include "slgan/image_io.hpp"
#include "slgan/losses.hpp"
#include "slgan/optimizer.hpp"
#include "slgan/trainer.hpp"

namespace slgan::eval {

namespace {

constexpr const char* kProbeMagic = "SLGAN-PROBE";
constexpr int kProbeFormatVersion = 1;
constexpr int kChunk = 256;

Tensor row_slice(const Tensor& t, int begin, int end) { return t.rows(begin, end); }

}  // namespace

int archetype_of(std::span<const float> bits) {
  int c = 0;
  for (int i = 0; i < 3 && i < static_cast<int>(bits.size()); ++i)
    if (bits[static_cast<std::size_t>(i)] > 0.5f) c |= 1 << i;
  return c;
}

// ------------------------------------------------------------------ probe

ProbeClassifier::ProbeClassifier(int image_size, int channels, int attribute_count)
    : image_size_(image_size), channels_(channels), attribute_count_(attribute_count) {
  ModelConfig{image_size, channels, attribute_count, 1}.validate();
  build();
  net_.declare(params_);
}

void ProbeClassifier::build() {
  int blocks = 0;
  for (int s = image_size_; s > 4; s /= 2) ++blocks;
  int in = channels_;
  for (int b = 0; b < blocks; ++b) {
    const int out = 16 << b;
    net_.emplace<nn::Conv2d>("probe.conv" + std::to_string(b), in, out, 4, 2, 1);
    net_.emplace<nn::LeakyRelu>(0.2f);
    in = out;
  }
  net_.emplace<nn::Reshape>(std::vector<int>{in * 16});
  net_.emplace<nn::Linear>("probe.fc", in * 16, 128);
  net_.emplace<nn::LeakyRelu>(0.2f);
  net_.emplace<nn::Linear>("probe.out", 128, attribute_count_ + kArchetypeCount);
}

Tensor ProbeClassifier::logits(const Tensor& images, nn::Trace* trace) const {
  validate_images(images, ModelConfig{image_size_, channels_, attribute_count_, 1});
  return net_.forward(params_, images, trace);
}

ProbeOutput ProbeClassifier::predict(const Tensor& images) const {
  const int n = images.rank() == 4 ? images.dim(0) : 0;
  const int k = attribute_count_;
  ProbeOutput out{Tensor({n, k}), Tensor({n, kArchetypeCount})};
  for (int begin = 0; begin < n; begin += kChunk) {
    const int end = std::min(n, begin + kChunk);
    const Tensor z = logits(row_slice(images, begin, end), nullptr);
    const int w = k + kArchetypeCount;
    for (int i = 0; i < end - begin; ++i) {
      const float* row = z.data() + static_cast<std::size_t>(i) * w;
      float* p = out.attribute_prob.data() + static_cast<std::size_t>(begin + i) * k;
      for (int j = 0; j < k; ++j) p[j] = static_cast<float>(losses::sigmoid<double>(row[j]));
      float* q = out.archetype_prob.data() + static_cast<std::size_t>(begin + i) * kArchetypeCount;
      const float mx = *std::max_element(row + k, row + w);
      double sum = 0;
      for (int c = 0; c < kArchetypeCount; ++c) sum += std::exp(double(row[k + c]) - mx);
      for (int c = 0; c < kArchetypeCount; ++c)
        q[c] = static_cast<float>(std::exp(double(row[k + c]) - mx) / sum);
    }
  }
  return out;
}

Tensor ProbeClassifier::predict_bits(const Tensor& images) const {
  Tensor p = predict(images).attribute_prob;
  for (float& v : p.values()) v = v > 0.5f ? 1.0f : 0.0f;
  return p;
}

std::vector<double> ProbeClassifier::accuracy(const Tensor& images, const Tensor& labels) const {
  const Tensor bits = predict_bits(images);
  if (labels.shape() != bits.shape())
    throw ConfigError("probe accuracy: labels " + shape_string(labels.shape()) +
                      " do not match predictions " + shape_string(bits.shape()));
  const int n = bits.dim(0), k = bits.dim(1);
  std::vector<double> acc(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      if (bits.data()[i * k + j] == labels.data()[i * k + j]) acc[static_cast<std::size_t>(j)] += 1;
  for (double& a : acc) a /= std::max(n, 1);
  return acc;
}

double ProbeClassifier::gate_min() const {
  if (gate_accuracy_.empty()) return 0.0;
  return *std::min_element(gate_accuracy_.begin(), gate_accuracy_.end());
}

void ProbeClassifier::save(const std::filesystem::path& path) const {
  nlohmann::json meta;
  meta["format_version"] = kProbeFormatVersion;
  meta["image_size"] = image_size_;
  meta["channels"] = channels_;
  meta["attribute_count"] = attribute_count_;
  meta["gate_accuracy"] = gate_accuracy_;
  meta["train_steps"] = train_steps_;
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (std::size_t i = 0; i < params_.size(); ++i)
    tensors.emplace_back(params_.names()[i], &params_.tensors()[i]);
  const std::string bytes = pack_archive(kProbeMagic, meta, tensors);
  write_file_bytes(path, std::span<const std::uint8_t>(
                             reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

ProbeClassifier ProbeClassifier::load(const std::filesystem::path& path) {
  const auto raw = read_file_bytes(path);
  Archive a = unpack_archive(kProbeMagic, std::string(raw.begin(), raw.end()));
  try {
    if (a.meta.at("format_version").get<int>() != kProbeFormatVersion)
      throw VersionError("probe: unsupported format version");
    ProbeClassifier p(a.meta.at("image_size").get<int>(), a.meta.at("channels").get<int>(),
                      a.meta.at("attribute_count").get<int>());
    p.gate_accuracy_ = a.meta.at("gate_accuracy").get<std::vector<double>>();
    p.train_steps_ = a.meta.at("train_steps").get<std::int64_t>();
    if (a.tensors.size() != p.params_.size()) throw IntegrityError("probe: tensor count mismatch");
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
      if (a.tensors[i].name != p.params_.names()[i] ||
          a.tensors[i].tensor.shape() != p.params_.tensors()[i].shape())
        throw IntegrityError("probe: unexpected tensor '" + a.tensors[i].name + "'");
      p.params_.tensors()[i] = std::move(a.tensors[i].tensor);
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("probe: malformed metadata: ") + e.what());
  }
}

ProbeClassifier train_probe(const data::Dataset& ds, std::uint64_t seed,
                            const ProbeTrainConfig& cfg) {
  const data::Split train = ds.manifest.train, val = ds.manifest.val;
  if (train.size() < 1 || val.size() < 1)
    throw ConfigError("train_probe: dataset needs non-empty train and val splits");
  const int k = ds.labels.dim(1);
  if (k < 3) throw ConfigError("train_probe: archetypes need at least 3 attributes");
  ProbeClassifier probe(ds.image_size(), ds.channels(), k);
  std::mt19937_64 rng(seed);
  probe.net_.initialize(probe.params_, rng);
  AdamState adam = AdamState::for_params(probe.params_);
  const AdamConfig adam_cfg{cfg.learning_rate, 0.9, 0.999, 1e-8};
  const Tensor val_images = ds.images.rows(val.begin, val.end);
  const Tensor val_labels = ds.labels.rows(val.begin, val.end);
  std::uniform_int_distribution<int> pick(train.begin, train.end - 1);
  const int n = cfg.batch_size, w = k + kArchetypeCount;

  std::vector<double> acc;
  int step = 0;
  while (step < cfg.max_steps) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int& i : idx) i = pick(rng);
    const ImageBatch x = ds.image_batch(idx);
    const AttributeBatch y = ds.label_batch(idx);
    nn::Trace trace;
    const Tensor z = probe.logits(x.pixels, &trace);
    Tensor dz({n, w});
    for (int i = 0; i < n; ++i) {
      const float* row = z.data() + static_cast<std::size_t>(i) * w;
      const float* yi = y.values.data() + static_cast<std::size_t>(i) * k;
      float* g = dz.data() + static_cast<std::size_t>(i) * w;
      for (int j = 0; j < k; ++j)
        g[j] = static_cast<float>((losses::sigmoid<double>(row[j]) - yi[j]) / (double(n) * k));
      const int c = archetype_of(std::span<const float>(yi, static_cast<std::size_t>(k)));
      const float mx = *std::max_element(row + k, row + w);
      double sum = 0;
      for (int a = 0; a < kArchetypeCount; ++a) sum += std::exp(double(row[k + a]) - mx);
      for (int a = 0; a < kArchetypeCount; ++a) {
        const double p = std::exp(double(row[k + a]) - mx) / sum;
        g[k + a] = static_cast<float>((p - (a == c ? 1.0 : 0.0)) / n);
      }
    }
    nn::ParamStore grads = probe.params_.zeros_like();
    probe.net_.backward(probe.params_, trace, dz, &grads, false);
    adam_step(probe.params_, grads, adam, adam_cfg);
    ++step;
    if (step % cfg.check_every == 0 || step == cfg.max_steps) {
      acc = probe.accuracy(val_images, val_labels);
      // Stop with some margin over the gate so fresh renderings also clear it.
      if (*std::min_element(acc.begin(), acc.end()) >= 0.998) break;
    }
  }
  probe.gate_accuracy_ = acc;
  probe.train_steps_ = step;
  if (probe.gate_min() < kProbeGate) {
    throw GateFailure("probe gate failed: held-out accuracy " + format_number(probe.gate_min()) +
                      " < " + format_number(kProbeGate) + " after " + std::to_string(step) +
                      " steps (per attribute:" + [&] {
                        std::string all;
                        for (double a : acc) all += " " + format_number(a);
                        return all;
                      }() + ")");
  }
  return probe;
}

// ---------------------------------------------------------------- metrics

AttributeErrorReport attribute_error(const Tensor& prob, const Tensor& y) {
  if (prob.rank() != 2 || prob.shape() != y.shape())
    throw ConfigError("attribute_error: predictions " + shape_string(prob.shape()) +
                      " do not match attributes " + shape_string(y.shape()));
  const int n = prob.dim(0), k = prob.dim(1);
  if (n < 1) throw InputError("attribute_error: no images");
  AttributeErrorReport r;
  r.count = n;
  r.per_attribute.assign(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      const double d = double(prob.data()[i * k + j]) - double(y.data()[i * k + j]);
      r.per_attribute[static_cast<std::size_t>(j)] += d * d;
    }
  double total = 0;
  for (double& v : r.per_attribute) {
    total += v;
    v /= n;
  }
  r.mean = total / (double(n) * k);
  return r;
}

AttributeErrorReport attribute_error(const Tensor& images, const Tensor& y,
                                     const ProbeClassifier& probe) {
  if (y.rank() != 2 || y.dim(1) != probe.attribute_count())
    throw ConfigError("attribute_error: K mismatch between attributes and probe");
  return attribute_error(probe.predict(images).attribute_prob, y);
}

InceptionScore inception_score(const Tensor& post, int n_splits) {
  if (post.rank() != 2 || post.dim(1) < 1) throw ConfigError("inception_score: expected [N, C]");
  if (n_splits < 1) throw ConfigError("inception_score: n_splits must be >= 1");
  const int n = post.dim(0), c = post.dim(1);
  if (n < 2 * n_splits)
    throw InputError("inception_score: need at least " + std::to_string(2 * n_splits) +
                     " images for " + std::to_string(n_splits) + " splits, got " +
                     std::to_string(n));
  std::vector<double> scores;
  for (int s = 0; s < n_splits; ++s) {
    const int begin = static_cast<int>(static_cast<long long>(s) * n / n_splits);
    const int end = static_cast<int>(static_cast<long long>(s + 1) * n / n_splits);
    std::vector<double> marginal(static_cast<std::size_t>(c), 0.0);
    for (int i = begin; i < end; ++i)
      for (int j = 0; j < c; ++j) marginal[static_cast<std::size_t>(j)] += post.data()[i * c + j];
    for (double& m : marginal) m /= (end - begin);
    double kl = 0;
    for (int i = begin; i < end; ++i)
      for (int j = 0; j < c; ++j) {
        const double p = post.data()[i * c + j];
        if (p > 0) kl += p * (std::log(p) - std::log(marginal[static_cast<std::size_t>(j)]));
      }
    scores.push_back(std::exp(kl / (end - begin)));
  }
  InceptionScore r;
  r.splits = n_splits;
  r.count = n;
  for (double s : scores) r.mean += s;
  r.mean /= n_splits;
  for (double s : scores) r.stddev += (s - r.mean) * (s - r.mean);
  r.stddev = std::sqrt(r.stddev / n_splits);
  return r;
}

InceptionScore inception_score(const Tensor& images, const ProbeClassifier& probe, int n_splits) {
  return inception_score(probe.predict(images).archetype_prob, n_splits);
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(4.0 / mse);
}

ReconstructionReport compare_images(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 4)
    throw ConfigError("compare_images: shapes " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()) + " differ");
  const int n = a.dim(0);
  const std::size_t per = a.size() / static_cast<std::size_t>(std::max(n, 1));
  ReconstructionReport r;
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < per; ++j) {
      const double d = double(a.data()[i * per + j]) - double(b.data()[i * per + j]);
      sum += d * d;
    }
    r.mse.push_back(sum / double(per));
    r.psnr.push_back(psnr_from_mse(r.mse.back()));
  }
  for (int i = 0; i < n; ++i) {
    r.mean_mse += r.mse[static_cast<std::size_t>(i)];
    r.mean_psnr += r.psnr[static_cast<std::size_t>(i)];
  }
  if (n > 0) {
    r.mean_mse /= n;
    r.mean_psnr /= n;
  }
  r.aggregate_psnr = psnr_from_mse(r.mean_mse);
  return r;
}

ReconstructionReport reconstruction_report(const Model& model, const ModelParams& params,
                                           const data::Dataset& ds) {
  const int n = ds.size();
  Tensor recon(ds.images.shape());
  const std::size_t per = ds.images.size() / static_cast<std::size_t>(std::max(n, 1));
  for (int begin = 0; begin < n; begin += kChunk) {
    const int end = std::min(n, begin + kChunk);
    const ImageBatch out = modify(model, params, ImageBatch{ds.images.rows(begin, end)},
                                  AttributeBatch{ds.labels.rows(begin, end)}, NoiseMode::mean);
    std::copy(out.pixels.data(), out.pixels.data() + out.pixels.size(), recon.data() + begin * per);
  }
  return compare_images(ds.images, recon);
}

double discriminator_accuracy(const Model& model, const ModelParams& params, const Tensor& real,
                              const Tensor& fake) {
  const Tensor r = model.discriminate(params, ImageBatch{real}).realness_logit;
  const Tensor f = model.discriminate(params, ImageBatch{fake}).realness_logit;
  int correct = 0;
  for (float v : r.values()) correct += v > 0.0f;
  for (float v : f.values()) correct += v < 0.0f;
  return double(correct) / double(r.size() + f.size());
}

FlipReport flip_report(const Model& model, const ModelParams& params, const ProbeClassifier& probe,
                       const Tensor& images, const Tensor& labels) {
  const int n = images.dim(0), k = labels.dim(1);
  if (labels.dim(0) != n) throw ConfigError("flip_report: image and label counts differ");
  Tensor flipped = labels;
  for (int i = 0; i < n; ++i) {
    float& v = flipped.data()[i * k + i % k];
    v = 1.0f - v;
  }
  const Tensor base_bits =
      probe.predict_bits(modify(model, params, ImageBatch{images}, AttributeBatch{labels},
                                NoiseMode::mean).pixels);
  const Tensor flip_bits =
      probe.predict_bits(modify(model, params, ImageBatch{images}, AttributeBatch{flipped},
                                NoiseMode::mean).pixels);
  FlipReport r;
  r.trials = n;
  int flips = 0, unchanged = 0;
  for (int i = 0; i < n; ++i) {
    const int t = i % k;
    const float* b = base_bits.data() + i * k;
    const float* f = flip_bits.data() + i * k;
    if (f[t] == flipped.data()[i * k + t] && f[t] != b[t]) ++flips;
    bool same = true;
    for (int j = 0; j < k; ++j)
      if (j != t && f[j] != b[j]) same = false;
    unchanged += same;
  }
  r.flip_rate = n ? double(flips) / n : 0.0;
  r.others_unchanged = n ? double(unchanged) / n : 0.0;
  return r;
}

std::pair<Tensor, Tensor> generate_from_marginal(const Model& model, const ModelParams& params,
                                                 const Tensor& rows, int count,
                                                 std::uint64_t seed) {
  const ModelConfig& mc = model.config();
  std::mt19937_64 rng(seed);
  const Tensor z = standard_normal(count, mc.latent_dim, rng);
  const Tensor y = data::AttributeMarginal(rows).sample_batch(count, rng).values;
  Tensor images({count, mc.channels, mc.image_size, mc.image_size});
  const std::size_t per = images.size() / static_cast<std::size_t>(std::max(count, 1));
  for (int begin = 0; begin < count; begin += kChunk) {
    const int end = std::min(count, begin + kChunk);
    const ImageBatch out =
        model.decode(params, LatentBatch{z.rows(begin, end)}, AttributeBatch{y.rows(begin, end)});
    std::copy(out.pixels.data(), out.pixels.data() + out.pixels.size(), images.data() + begin * per);
  }
  return {std::move(images), y};
}

namespace {

void add_per_attribute(Record& r, const std::string& prefix, const std::vector<std::string>& names,
                       const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size() && i < names.size(); ++i)
    r.emplace_back(prefix + names[i], format_number(values[i]));
}

}  // namespace

EvaluationSummary evaluate(const Model& model, const ModelParams& params,
                           const std::vector<std::string>& names, const Tensor& rows,
                           const data::Dataset& ds, const ProbeClassifier& probe,
                           const EvaluationOptions& opt) {
  if (ds.labels.dim(1) != probe.attribute_count() ||
      model.config().attribute_count != probe.attribute_count())
    throw ConfigError("evaluate: attribute count differs between model, probe and dataset");
  EvaluationSummary s;
  const data::Split test = ds.manifest.test.size() > 0 ? ds.manifest.test : ds.manifest.train;
  const data::Dataset test_set = ds.subset(test);
  data::Split train_part = ds.manifest.train;
  train_part.end = std::min(train_part.end, train_part.begin + opt.train_recon_count);
  const data::Dataset train_set = ds.subset(train_part);

  s.probe_gate = probe.gate_accuracy();
  {
    Record r{{"metric", "probe_gate"},
             {"split", "val"},
             {"train_steps", std::to_string(probe.train_steps())},
             {"min_accuracy", format_number(probe.gate_min())},
             {"threshold", format_number(kProbeGate)}};
    add_per_attribute(r, "accuracy.", names, s.probe_gate);
    s.records.push_back(format_record(r));
  }

  s.real_error = attribute_error(test_set.images, test_set.labels, probe);
  {
    Record r{{"metric", "attribute_error"},
             {"source", "real_test"},
             {"count", std::to_string(s.real_error.count)},
             {"value", format_number(s.real_error.mean)}};
    add_per_attribute(r, "error.", names, s.real_error.per_attribute);
    s.records.push_back(format_record(r));
  }

  const auto [gen_images, gen_y] =
      generate_from_marginal(model, params, rows, opt.generated_count, opt.seed);
  const ProbeOutput gen_pred = probe.predict(gen_images);
  s.generated_error = attribute_error(gen_pred.attribute_prob, gen_y);
  {
    Record r{{"metric", "attribute_error"},
             {"source", "generated"},
             {"count", std::to_string(s.generated_error.count)},
             {"seed", std::to_string(opt.seed)},
             {"value", format_number(s.generated_error.mean)}};
    add_per_attribute(r, "error.", names, s.generated_error.per_attribute);
    s.records.push_back(format_record(r));
  }

  s.inception = inception_score(gen_pred.archetype_prob, opt.n_splits);
  s.records.push_back(format_record({{"metric", "inception_score"},
                                     {"source", "generated"},
                                     {"count", std::to_string(s.inception.count)},
                                     {"n_splits", std::to_string(s.inception.splits)},
                                     {"mean", format_number(s.inception.mean)},
                                     {"std", format_number(s.inception.stddev)}}));

  s.recon_train = reconstruction_report(model, params, train_set);
  s.recon_test = reconstruction_report(model, params, test_set);
  s.recon_ratio = s.recon_train.mean_mse > 0 ? s.recon_test.mean_mse / s.recon_train.mean_mse
                                             : kInfinitePsnr;
  for (const auto& [split, rep] : {std::pair{"train", &s.recon_train}, std::pair{"test", &s.recon_test}}) {
    s.records.push_back(format_record({{"metric", "reconstruction"},
                                       {"split", split},
                                       {"count", std::to_string(rep->mse.size())},
                                       {"mean_mse", format_number(rep->mean_mse)},
                                       {"mean_psnr", format_number(rep->mean_psnr)},
                                       {"aggregate_psnr", format_number(rep->aggregate_psnr)}}));
  }
  s.records.push_back(format_record({{"metric", "reconstruction_ratio"},
                                     {"value", format_number(s.recon_ratio)}}));

  const int trials = std::min(opt.flip_trials, test_set.size());
  s.flip = flip_report(model, params, probe, test_set.images.rows(0, trials),
                       test_set.labels.rows(0, trials));
  s.records.push_back(format_record({{"metric", "attribute_flip"},
                                     {"trials", std::to_string(s.flip.trials)},
                                     {"flip_rate", format_number(s.flip.flip_rate)},
                                     {"others_unchanged", format_number(s.flip.others_unchanged)}}));
  return s;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string format_record(const Record& record) {
  std::string out;
  for (const auto& [k, v] : record) {
    if (!out.empty()) out += ' ';
    out += k;
    out += '=';
    out += v;
  }
  return out;
}

}  // namespace slgan::eval
