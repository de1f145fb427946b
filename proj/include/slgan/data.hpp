#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slgan/error.hpp"
#include "slgan/model.hpp"
#include "slgan/tensor.hpp"

namespace slgan::data {

inline constexpr int kSyntheticAttributeCount = 6;
inline constexpr int kSyntheticChannels = 3;

enum SyntheticAttribute : int { kSkinDark, kHairDark, kGlasses, kSmiling, kHat, kFacialHair };

const std::vector<std::string>& synthetic_attribute_names();

// Procedural face description. Nuisance ranges: jitter in [-2, 2] px, background in
// [0.2, 0.8], radius_scale in [0.9, 1.1].
struct FaceSpec {
  std::array<bool, kSyntheticAttributeCount> bits{};
  double jitter_x = 0.0;
  double jitter_y = 0.0;
  double background = 0.5;
  double radius_scale = 1.0;

  void validate() const;
};

// Axis-aligned pixel box, half-open: [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// [3, S, S] image in [-1, 1].
Tensor render_face(const FaceSpec& spec, int image_size);

// Pixels that toggling `attribute` (nuisance fixed) may change, as an S*S row-major mask.
std::vector<bool> attribute_region_mask(const FaceSpec& spec, int image_size, int attribute);

// Bounding box of the glasses (both lenses and the bridge).
PixelBox eye_region_box(const FaceSpec& spec, int image_size);

struct Split {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

struct DatasetManifest {
  std::vector<std::string> attribute_names;
  int item_count = 0;
  Split train, val, test;
  std::string source;

  int attribute_count() const { return static_cast<int>(attribute_names.size()); }
};

// 80/10/10 contiguous split.
DatasetManifest make_manifest(std::vector<std::string> attribute_names, int item_count,
                              std::string source);

struct Dataset {
  Tensor images;  // [n, C, S, S]
  Tensor labels;  // [n, K]
  DatasetManifest manifest;

  int size() const { return images.rank() > 0 ? images.dim(0) : 0; }
  int image_size() const { return images.dim(2); }
  int channels() const { return images.dim(1); }
  ImageBatch image_batch(std::span<const int> indices) const;
  AttributeBatch label_batch(std::span<const int> indices) const;
  // Items [split.begin, split.end) as a standalone dataset.
  Dataset subset(const Split& split) const;
};

// The specs sample_dataset renders: bits Bernoulli(0.5), nuisance uniform.
std::vector<FaceSpec> sample_specs(int n, std::uint64_t seed);

// n i.i.d. faces, every bit Bernoulli(0.5), nuisance uniform; deterministic per seed.
Dataset sample_dataset(int n, std::uint64_t seed, int image_size);

// Empirical p(y): uniform draws of whole attribute rows.
class AttributeMarginal {
 public:
  explicit AttributeMarginal(Tensor rows);
  std::vector<float> sample(std::mt19937_64& rng) const;
  AttributeBatch sample_batch(int count, std::mt19937_64& rng) const;
  const Tensor& rows() const noexcept { return rows_; }
  int attribute_count() const { return rows_.dim(1); }

 private:
  Tensor rows_;
};

// Same as AttributeMarginal(dataset.labels).sample(rng).
std::vector<float> sample_attribute_marginal(const Dataset& dataset, std::mt19937_64& rng);

// Reported when a directory/table load fails; every problem is listed.
class DatasetLoadError : public InputError {
 public:
  explicit DatasetLoadError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

inline constexpr const char* kAttributeTableName = "attributes.csv";

// Attribute table: `filename,attr1,...,attrK` header, one row per image, cells 0/1,
// ASCII, LF line endings, no quoting. Fails atomically with a DatasetLoadError.
Dataset load_image_directory(const std::filesystem::path& image_dir,
                             const std::filesystem::path& attribute_table);

// Writes one PNG per item plus attributes.csv into dir.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

std::string image_file_name(int index);

}  // namespace slgan::data
