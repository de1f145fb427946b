#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "slgan/data.hpp"
#include "slgan/model.hpp"
#include "slgan/nn.hpp"

namespace slgan::eval {

// Archetype c = bit0 + 2 bit1 + 4 bit2 over the first three attributes.
inline constexpr int kArchetypeCount = 8;
inline constexpr double kProbeGate = 0.99;
inline constexpr int kDefaultGeneratedCount = 1000;
inline constexpr int kDefaultSplits = 10;

int archetype_of(std::span<const float> bits);

struct ProbeOutput {
  Tensor attribute_prob;  // [N, K] sigmoid
  Tensor archetype_prob;  // [N, 8] softmax
};

struct ProbeTrainConfig {
  int batch_size = 64;
  int check_every = 250;
  int max_steps = 4000;
  double learning_rate = 1e-3;
};

// Small conv classifier with K sigmoid outputs and an 8-way archetype softmax.
// Frozen once train_probe returns.
class ProbeClassifier {
 public:
  ProbeClassifier(int image_size, int channels, int attribute_count);

  ProbeOutput predict(const Tensor& images) const;
  // Thresholded at 0.5.
  Tensor predict_bits(const Tensor& images) const;
  // Fraction of correct bits per attribute.
  std::vector<double> accuracy(const Tensor& images, const Tensor& labels) const;

  int image_size() const noexcept { return image_size_; }
  int channels() const noexcept { return channels_; }
  int attribute_count() const noexcept { return attribute_count_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  // Held-out per-attribute accuracy recorded when the gate passed.
  const std::vector<double>& gate_accuracy() const noexcept { return gate_accuracy_; }
  double gate_min() const;
  std::int64_t train_steps() const noexcept { return train_steps_; }

  void save(const std::filesystem::path& path) const;
  static ProbeClassifier load(const std::filesystem::path& path);

 private:
  friend ProbeClassifier train_probe(const data::Dataset&, std::uint64_t, const ProbeTrainConfig&);
  void build();
  Tensor logits(const Tensor& images, nn::Trace* trace) const;

  int image_size_, channels_, attribute_count_;
  nn::Sequential net_;
  nn::ParamStore params_;
  std::vector<double> gate_accuracy_;
  std::int64_t train_steps_ = 0;
};

// Trains on the train split and gates on the val split (every attribute >= 0.99).
// Throws GateFailure if the budget runs out first.
ProbeClassifier train_probe(const data::Dataset& dataset, std::uint64_t seed,
                            const ProbeTrainConfig& config = {});

struct AttributeErrorReport {
  double mean = 0;
  std::vector<double> per_attribute;
  int count = 0;
};

// Mean of (p - y)^2 over images and attributes, plus per-attribute means.
AttributeErrorReport attribute_error(const Tensor& attribute_prob, const Tensor& y_specified);
AttributeErrorReport attribute_error(const Tensor& images, const Tensor& y_specified,
                                     const ProbeClassifier& probe);

struct InceptionScore {
  double mean = 0;
  double stddev = 0;
  int splits = 0;
  int count = 0;
};

// exp(mean KL(p(c|x) || p(c))) per split; mean and population stddev over splits.
InceptionScore inception_score(const Tensor& posteriors, int n_splits = kDefaultSplits);
InceptionScore inception_score(const Tensor& images, const ProbeClassifier& probe,
                               int n_splits = kDefaultSplits);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// PSNR for [-1, 1] images (peak-to-peak 2): 10 log10(4 / mse); +inf when mse is 0.
double psnr_from_mse(double mse);

struct ReconstructionReport {
  std::vector<double> mse, psnr;  // per image
  double mean_mse = 0;
  double mean_psnr = 0;  // mean over images; +inf if any image is exact
  double aggregate_psnr = 0;  // psnr_from_mse(mean_mse)
};

ReconstructionReport compare_images(const Tensor& reference, const Tensor& reconstruction);
// modify(x, own labels, mean) vs x over every image of the dataset.
ReconstructionReport reconstruction_report(const Model& model, const ModelParams& params,
                                           const data::Dataset& dataset);

// Fraction of correct real/fake decisions (logit > 0 means real) over both sets.
double discriminator_accuracy(const Model& model, const ModelParams& params, const Tensor& real,
                              const Tensor& fake);

struct FlipReport {
  int trials = 0;
  double flip_rate = 0;         // targeted bit flipped to the requested value
  double others_unchanged = 0;  // every other bit's prediction unchanged
};

// Trial i flips attribute i mod K: modify(x, y) vs modify(x, y with the bit flipped), mean mode.
FlipReport flip_report(const Model& model, const ModelParams& params, const ProbeClassifier& probe,
                       const Tensor& images, const Tensor& labels);

struct EvaluationOptions {
  int generated_count = kDefaultGeneratedCount;
  int n_splits = kDefaultSplits;
  int flip_trials = 200;
  int train_recon_count = 1000;
  std::uint64_t seed = 1;
};

struct EvaluationSummary {
  std::vector<double> probe_gate;           // held-out accuracy recorded with the probe
  AttributeErrorReport real_error;          // test split, true labels
  AttributeErrorReport generated_error;     // prior z, y from the stored marginal
  InceptionScore inception;
  ReconstructionReport recon_train, recon_test;
  double recon_ratio = 0;                   // recon_test.mean_mse / recon_train.mean_mse
  FlipReport flip;                          // test split
  std::vector<std::string> records;         // one formatted line per metric
};

// Everything the desk-scale report needs, from one checkpoint and one dataset.
EvaluationSummary evaluate(const Model& model, const ModelParams& params,
                           const std::vector<std::string>& attribute_names,
                           const Tensor& attribute_rows, const data::Dataset& dataset,
                           const ProbeClassifier& probe, const EvaluationOptions& options = {});

// count images from z ~ N(0, I) and y drawn from the marginal rows; returns (images, y).
std::pair<Tensor, Tensor> generate_from_marginal(const Model& model, const ModelParams& params,
                                                 const Tensor& attribute_rows, int count,
                                                 std::uint64_t seed);

// Key=value record in the metrics-log style: `metric=<name> k=v ...`.
using Record = std::vector<std::pair<std::string, std::string>>;
std::string format_record(const Record& record);
std::string format_number(double v);

}  // namespace slgan::eval
