#include "slgan/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "slgan/image_io.hpp"

namespace slgan::data {

namespace {

using Rgb = std::array<float, 3>;

// Per-axis supersampling; every pixel averages kSubsamples^2 point samples.
constexpr int kSubsamples = 4;

constexpr Rgb kColSkinLight{0.96f, 0.82f, 0.68f};
constexpr Rgb kColSkinDark{0.50f, 0.33f, 0.22f};
constexpr Rgb kColHairLight{0.95f, 0.85f, 0.35f};
constexpr Rgb kColHairDark{0.12f, 0.08f, 0.05f};
constexpr Rgb kColEye{0.05f, 0.05f, 0.08f};
constexpr Rgb kColLens{0.15f, 0.25f, 0.75f};
constexpr Rgb kColMouth{0.75f, 0.10f, 0.15f};
constexpr Rgb kColBeard{0.10f, 0.10f, 0.10f};
constexpr Rgb kColHat{0.15f, 0.55f, 0.20f};

// Continuous face layout in pixel units; every feature is a predicate on a point.
struct Layout {
  double cx, cy, a, b, size;

  Layout(const FaceSpec& s, int image_size) : size(image_size) {
    cx = image_size / 2.0 + s.jitter_x;
    cy = image_size / 2.0 + 0.06 * image_size + s.jitter_y;
    a = 0.28 * image_size * s.radius_scale;
    b = 0.34 * image_size * s.radius_scale;
  }

  static bool in_ellipse(double x, double y, double ex, double ey, double ra, double rb) {
    const double u = (x - ex) / ra, v = (y - ey) / rb;
    return u * u + v * v <= 1.0;
  }
  static bool in_box(double x, double y, double x0, double y0, double x1, double y1) {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }

  bool face(double x, double y) const { return in_ellipse(x, y, cx, cy, a, b); }
  bool hair(double x, double y) const {
    return y < cy - 0.45 * b && in_ellipse(x, y, cx, cy, 1.12 * a, 1.10 * b);
  }
  double eye_y() const { return cy - 0.2 * b; }
  bool eye(double x, double y) const {
    const double r = std::max(0.6, 0.12 * a);
    return in_box(x, y, cx - 0.4 * a - r, eye_y() - r, cx - 0.4 * a + r, eye_y() + r) ||
           in_box(x, y, cx + 0.4 * a - r, eye_y() - r, cx + 0.4 * a + r, eye_y() + r);
  }
  bool glasses(double x, double y) const {
    const double hw = 0.30 * a, hh = 0.20 * b;
    const double lx = cx - 0.4 * a, rx = cx + 0.4 * a;
    return in_box(x, y, lx - hw, eye_y() - hh, lx + hw, eye_y() + hh) ||
           in_box(x, y, rx - hw, eye_y() - hh, rx + hw, eye_y() + hh) ||
           in_box(x, y, lx + hw, eye_y() - 0.06 * b, rx - hw, eye_y() + 0.06 * b);
  }
  double mouth_y() const { return cy + 0.45 * b; }
  double mouth_half_width() const { return 0.45 * a; }
  double mouth_curve() const { return 0.32 * b; }
  double mouth_thickness() const { return std::max(1.0, 0.06 * size); }
  bool mouth(double x, double y, bool smiling) const {
    const double w = mouth_half_width();
    if (std::abs(x - cx) > w) return false;
    double centre = mouth_y();
    if (smiling) {
      // Corners raised, middle lowered.
      const double u = (x - cx) / w;
      centre += mouth_curve() * (0.5 - u * u);
    }
    return std::abs(y - centre) <= mouth_thickness() / 2.0;
  }
  bool mouth_region(double x, double y) const {
    const double h = mouth_curve() / 2.0 + mouth_thickness() / 2.0;
    return in_box(x, y, cx - mouth_half_width(), mouth_y() - h, cx + mouth_half_width(),
                  mouth_y() + h);
  }
  bool beard(double x, double y) const {
    return in_ellipse(x, y, cx, cy + 0.80 * b, 0.42 * a, 0.15 * b);
  }
  bool hat(double x, double y) const {
    return in_box(x, y, cx - 0.75 * a, cy - 1.18 * b, cx + 0.75 * a, cy - 0.62 * b) ||
           in_box(x, y, cx - 1.30 * a, cy - 0.72 * b, cx + 1.30 * a, cy - 0.58 * b);
  }
};

void check_size(int image_size) {
  if (image_size != 16 && image_size != 32 && image_size != 64)
    throw InputError("image size must be 16, 32 or 64, got " + std::to_string(image_size));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

const std::vector<std::string>& synthetic_attribute_names() {
  static const std::vector<std::string> names{"skin_dark", "hair_dark", "glasses",
                                              "smiling",   "hat",       "facial_hair"};
  return names;
}

void FaceSpec::validate() const {
  if (std::abs(jitter_x) > 2.0 || std::abs(jitter_y) > 2.0)
    throw InputError("FaceSpec: jitter outside [-2, 2] px");
  if (background < 0.2 || background > 0.8)
    throw InputError("FaceSpec: background shade outside [0.2, 0.8]");
  if (radius_scale < 0.9 || radius_scale > 1.1)
    throw InputError("FaceSpec: radius scale outside [0.9, 1.1]");
}

Tensor render_face(const FaceSpec& spec, int image_size) {
  spec.validate();
  check_size(image_size);
  const Layout g(spec, image_size);
  const int s = image_size;
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  Tensor img({kSyntheticChannels, s, s});
  const float bg = static_cast<float>(spec.background);
  for (int py = 0; py < s; ++py) {
    for (int px = 0; px < s; ++px) {
      Rgb sum{0, 0, 0};
      for (int sy = 0; sy < kSubsamples; ++sy)
        for (int sx = 0; sx < kSubsamples; ++sx) {
          const double x = px + (sx + 0.5) / kSubsamples, y = py + (sy + 0.5) / kSubsamples;
          Rgb c{bg, bg, bg};
          if (g.face(x, y)) c = spec.bits[kSkinDark] ? kColSkinDark : kColSkinLight;
          if (g.hair(x, y)) c = spec.bits[kHairDark] ? kColHairDark : kColHairLight;
          if (g.eye(x, y)) c = kColEye;
          if (spec.bits[kGlasses] && g.glasses(x, y)) c = kColLens;
          if (g.mouth(x, y, spec.bits[kSmiling])) c = kColMouth;
          if (spec.bits[kFacialHair] && g.beard(x, y)) c = kColBeard;
          if (spec.bits[kHat] && g.hat(x, y)) c = kColHat;
          for (int ch = 0; ch < 3; ++ch) sum[static_cast<std::size_t>(ch)] += c[static_cast<std::size_t>(ch)];
        }
      const std::size_t p = static_cast<std::size_t>(py) * s + px;
      // Quantized to 8-bit levels so the PNG round trip is exact.
      for (int ch = 0; ch < 3; ++ch) {
        const float mean = sum[static_cast<std::size_t>(ch)] / (kSubsamples * kSubsamples);
        img[ch * plane + p] = static_cast<float>(std::lround(mean * 255.0f)) / 127.5f - 1.0f;
      }
    }
  }
  return img;
}

std::vector<bool> attribute_region_mask(const FaceSpec& spec, int image_size, int attribute) {
  check_size(image_size);
  const Layout g(spec, image_size);
  std::vector<bool> mask(static_cast<std::size_t>(image_size) * image_size);
  auto inside = [&](double x, double y) {
    switch (attribute) {
      case kSkinDark: return g.face(x, y);
      case kHairDark: return g.hair(x, y);
      case kGlasses: return g.glasses(x, y);
      case kSmiling: return g.mouth_region(x, y);
      case kHat: return g.hat(x, y);
      case kFacialHair: return g.beard(x, y);
      default: throw InputError("unknown synthetic attribute index " + std::to_string(attribute));
    }
  };
  // A pixel belongs to the region when any of its subsamples does.
  for (int py = 0; py < image_size; ++py)
    for (int px = 0; px < image_size; ++px) {
      bool in = false;
      for (int sy = 0; sy < kSubsamples && !in; ++sy)
        for (int sx = 0; sx < kSubsamples && !in; ++sx)
          in = inside(px + (sx + 0.5) / kSubsamples, py + (sy + 0.5) / kSubsamples);
      mask[static_cast<std::size_t>(py) * image_size + px] = in;
    }
  return mask;
}

PixelBox eye_region_box(const FaceSpec& spec, int image_size) {
  const auto mask = attribute_region_mask(spec, image_size, kGlasses);
  PixelBox box{image_size, image_size, 0, 0};
  for (int y = 0; y < image_size; ++y)
    for (int x = 0; x < image_size; ++x)
      if (mask[static_cast<std::size_t>(y) * image_size + x]) {
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
  return box;
}

DatasetManifest make_manifest(std::vector<std::string> attribute_names, int item_count,
                              std::string source) {
  DatasetManifest m;
  m.attribute_names = std::move(attribute_names);
  m.item_count = item_count;
  const int train_end = static_cast<int>(static_cast<long>(item_count) * 8 / 10);
  const int val_end = static_cast<int>(static_cast<long>(item_count) * 9 / 10);
  m.train = {0, train_end};
  m.val = {train_end, val_end};
  m.test = {val_end, item_count};
  m.source = std::move(source);
  return m;
}

ImageBatch Dataset::image_batch(std::span<const int> indices) const {
  const std::size_t stride = images.size() / static_cast<std::size_t>(size());
  std::vector<int> shape = images.shape();
  shape[0] = static_cast<int>(indices.size());
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= size()) throw InputError("dataset index out of range");
    std::copy_n(images.data() + static_cast<std::size_t>(indices[i]) * stride, stride,
                out.data() + i * stride);
  }
  return {std::move(out)};
}

AttributeBatch Dataset::label_batch(std::span<const int> indices) const {
  const int k = labels.dim(1);
  Tensor out({static_cast<int>(indices.size()), k});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= size()) throw InputError("dataset index out of range");
    std::copy_n(labels.data() + static_cast<std::size_t>(indices[i]) * k, k,
                out.data() + i * static_cast<std::size_t>(k));
  }
  return {std::move(out)};
}

Dataset Dataset::subset(const Split& split) const {
  Dataset out;
  out.images = images.rows(split.begin, split.end);
  out.labels = labels.rows(split.begin, split.end);
  out.manifest = make_manifest(manifest.attribute_names, split.size(), manifest.source);
  return out;
}

std::vector<FaceSpec> sample_specs(int n, std::uint64_t seed) {
  if (n < 1) throw InputError("sample_dataset: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bit(0.5);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0), shade(0.2, 0.8), radius(0.9, 1.1);
  std::vector<FaceSpec> specs(static_cast<std::size_t>(n));
  for (FaceSpec& spec : specs) {
    for (bool& b : spec.bits) b = bit(rng);
    spec.jitter_x = jitter(rng);
    spec.jitter_y = jitter(rng);
    spec.background = shade(rng);
    spec.radius_scale = radius(rng);
  }
  return specs;
}

Dataset sample_dataset(int n, std::uint64_t seed, int image_size) {
  check_size(image_size);
  const std::vector<FaceSpec> specs = sample_specs(n, seed);
  Dataset ds;
  const std::size_t stride = static_cast<std::size_t>(kSyntheticChannels) * image_size * image_size;
  ds.images = Tensor({n, kSyntheticChannels, image_size, image_size});
  ds.labels = Tensor({n, kSyntheticAttributeCount});
  for (int i = 0; i < n; ++i) {
    const FaceSpec& spec = specs[static_cast<std::size_t>(i)];
    const Tensor img = render_face(spec, image_size);
    std::copy_n(img.data(), stride, ds.images.data() + static_cast<std::size_t>(i) * stride);
    for (int k = 0; k < kSyntheticAttributeCount; ++k)
      ds.labels[static_cast<std::size_t>(i) * kSyntheticAttributeCount + k] = spec.bits[k] ? 1.f : 0.f;
  }
  ds.manifest = make_manifest(synthetic_attribute_names(), n, "synthetic:seed=" + std::to_string(seed));
  return ds;
}

AttributeMarginal::AttributeMarginal(Tensor rows) : rows_(std::move(rows)) {
  if (rows_.rank() != 2 || rows_.dim(0) < 1)
    throw InputError("attribute marginal needs a non-empty dataset");
  validate_attributes(rows_, rows_.dim(1));
}

std::vector<float> AttributeMarginal::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<int> pick(0, rows_.dim(0) - 1);
  const int k = rows_.dim(1);
  const float* row = rows_.data() + static_cast<std::size_t>(pick(rng)) * k;
  return {row, row + k};
}

AttributeBatch AttributeMarginal::sample_batch(int count, std::mt19937_64& rng) const {
  const int k = rows_.dim(1);
  Tensor out({count, k});
  for (int i = 0; i < count; ++i) {
    const auto row = sample(rng);
    std::copy(row.begin(), row.end(), out.data() + static_cast<std::size_t>(i) * k);
  }
  return {std::move(out)};
}

std::vector<float> sample_attribute_marginal(const Dataset& dataset, std::mt19937_64& rng) {
  return AttributeMarginal(dataset.labels).sample(rng);
}

DatasetLoadError::DatasetLoadError(std::vector<std::string> diagnostics)
    : InputError([&] {
        std::string msg = "dataset load failed:";
        for (const auto& d : diagnostics) msg += "\n  " + d;
        return msg;
      }()),
      diagnostics_(std::move(diagnostics)) {}

std::string image_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", index);
  return buf;
}

Dataset load_image_directory(const std::filesystem::path& image_dir,
                             const std::filesystem::path& attribute_table) {
  namespace fs = std::filesystem;
  std::vector<std::string> problems;

  std::ifstream in(attribute_table, std::ios::binary);
  if (!in) throw DatasetLoadError({"cannot open attribute table " + attribute_table.string()});
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      lines.push_back(text.substr(start, end - start));
      start = end + 1;
    }
  }
  if (lines.empty()) throw DatasetLoadError({"attribute table is empty"});

  const auto header = split_csv_line(lines[0]);
  if (header.size() < 2 || header[0] != "filename") {
    throw DatasetLoadError({"malformed header: expected 'filename,attr1,...,attrK', got '" +
                            lines[0] + "'"});
  }
  std::vector<std::string> names(header.begin() + 1, header.end());
  {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) problems.push_back("malformed header: empty attribute name");
      if (!seen.insert(n).second) problems.push_back("malformed header: duplicate attribute " + n);
      if (n.find_first_of("\r\"") != std::string::npos)
        problems.push_back("malformed header: attribute name '" + n + "' has CR or quote");
    }
  }
  const int k = static_cast<int>(names.size());

  struct Row {
    std::string file;
    std::vector<float> bits;
  };
  std::vector<Row> rows;
  std::set<std::string> listed;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty() && li + 1 == lines.size()) break;
    const auto fields = split_csv_line(lines[li]);
    const std::string where = "line " + std::to_string(li + 1);
    if (static_cast<int>(fields.size()) != k + 1) {
      problems.push_back(where + ": expected " + std::to_string(k + 1) + " fields, got " +
                         std::to_string(fields.size()));
      continue;
    }
    Row row{fields[0], {}};
    const std::string item = where + " (" + fields[0] + ")";
    for (int j = 0; j < k; ++j) {
      const auto& cell = fields[static_cast<std::size_t>(j) + 1];
      if (cell == "0" || cell == "1") {
        row.bits.push_back(cell == "1" ? 1.f : 0.f);
      } else {
        problems.push_back(item + ": non-binary value '" + cell + "' for " +
                           names[static_cast<std::size_t>(j)]);
      }
    }
    if (!listed.insert(row.file).second) problems.push_back(where + ": duplicate row for " + row.file);
    rows.push_back(std::move(row));
  }
  if (rows.empty() && problems.empty()) problems.push_back("attribute table has no rows");

  // Files on disk vs rows.
  std::set<std::string> on_disk;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(image_dir, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") on_disk.insert(entry.path().filename().string());
  }
  if (ec) problems.push_back("cannot list image directory " + image_dir.string() + ": " + ec.message());
  for (const auto& r : rows)
    if (!on_disk.contains(r.file)) problems.push_back("missing image file: " + r.file);
  for (const auto& f : on_disk)
    if (!listed.contains(f)) problems.push_back("image without table row: " + f);
  if (!problems.empty()) throw DatasetLoadError(std::move(problems));

  Dataset ds;
  int size = 0, channels = 0;
  std::vector<Tensor> images;
  images.reserve(rows.size());
  for (const auto& r : rows) {
    try {
      const RasterImage raster = read_png(image_dir / r.file);
      if (raster.width != raster.height) {
        problems.push_back(r.file + ": image is not square");
        continue;
      }
      if (size == 0) {
        size = raster.width;
        channels = raster.channels;
        if (size != 16 && size != 32 && size != 64)
          problems.push_back(r.file + ": unsupported image size " + std::to_string(size));
      } else if (raster.width != size || raster.channels != channels) {
        problems.push_back(r.file + ": size/channels differ from the first image");
        continue;
      }
      images.push_back(raster_to_tensor(raster).reshaped({1, raster.channels, size, size}));
    } catch (const InputError& e) {
      problems.push_back(std::string("undecodable image ") + e.what());
    }
  }
  if (!problems.empty()) throw DatasetLoadError(std::move(problems));

  ds.images = stack_rows(images);
  ds.labels = Tensor({static_cast<int>(rows.size()), k});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].bits.begin(), rows[i].bits.end(), ds.labels.data() + i * static_cast<std::size_t>(k));
  ds.manifest = make_manifest(std::move(names), static_cast<int>(rows.size()), image_dir.string());
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream table;
  table << "filename";
  for (const auto& n : dataset.manifest.attribute_names) table << ',' << n;
  table << '\n';
  const int k = dataset.labels.dim(1);
  for (int i = 0; i < dataset.size(); ++i) {
    const std::string name = image_file_name(i);
    write_png(dir / name, batch_image(dataset.images, i));
    table << name;
    for (int j = 0; j < k; ++j)
      table << ',' << (dataset.labels[static_cast<std::size_t>(i) * k + j] != 0.f ? '1' : '0');
    table << '\n';
  }
  const std::string text = table.str();
  write_file_bytes(dir / kAttributeTableName,
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace slgan::data
