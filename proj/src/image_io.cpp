#include "slgan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "slgan/error.hpp"

namespace slgan {

std::vector<std::uint8_t> encode_png(const RasterImage& image) {
  if (image.channels != 1 && image.channels != 3)
    throw InputError("encode_png: only 1 or 3 channels supported");
  if (image.pixels.size() !=
      static_cast<std::size_t>(image.width) * image.height * image.channels)
    throw InputError("encode_png: pixel buffer size mismatch");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, image.pixels.data(), 0, nullptr))
    throw InputError(std::string("encode_png: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw InputError(std::string("encode_png: ") + img.message);
  out.resize(size);
  return out;
}

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw InputError(std::string("undecodable image: ") +
                     (bytes.empty() ? "empty input" : img.message));
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  RasterImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  const png_color black{0, 0, 0};
  if (!png_image_finish_read(&img, &black, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw InputError(std::string("undecodable image: ") + img.message);
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

RasterImage read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file_bytes(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
  write_file_bytes(path, encode_png(image));
}

Tensor raster_to_tensor(const RasterImage& image) {
  Tensor t({image.channels, image.height, image.width});
  const int plane = image.width * image.height;
  for (int p = 0; p < plane; ++p)
    for (int c = 0; c < image.channels; ++c)
      t[static_cast<std::size_t>(c) * plane + p] =
          static_cast<float>(image.pixels[static_cast<std::size_t>(p) * image.channels + c]) /
              127.5f -
          1.0f;
  return t;
}

RasterImage tensor_to_raster(const float* chw, int channels, int height, int width) {
  RasterImage out{width, height, channels, {}};
  const int plane = width * height;
  out.pixels.resize(static_cast<std::size_t>(plane) * channels);
  for (int p = 0; p < plane; ++p)
    for (int c = 0; c < channels; ++c) {
      const float v = (chw[static_cast<std::size_t>(c) * plane + p] + 1.0f) * 127.5f;
      out.pixels[static_cast<std::size_t>(p) * channels + c] =
          static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return out;
}

RasterImage batch_image(const Tensor& batch, int index) {
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  return tensor_to_raster(batch.data() + static_cast<std::size_t>(index) * c * h * w, c, h, w);
}

RasterImage contact_sheet(const Tensor& batch, int rows, int cols) {
  if (batch.rank() != 4 || rows < 1 || cols < 1 || rows * cols > batch.dim(0))
    throw InputError("contact_sheet: grid larger than the batch");
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  RasterImage sheet{cols * (w + 1) + 1, rows * (h + 1) + 1, c, {}};
  sheet.pixels.assign(static_cast<std::size_t>(sheet.width) * sheet.height * c, 255);
  for (int r = 0; r < rows; ++r)
    for (int k = 0; k < cols; ++k) {
      const RasterImage tile = batch_image(batch, r * cols + k);
      for (int y = 0; y < h; ++y)
        std::copy_n(tile.pixels.data() + static_cast<std::size_t>(y) * w * c, w * c,
                    sheet.pixels.data() +
                        (static_cast<std::size_t>(r * (h + 1) + 1 + y) * sheet.width +
                         k * (w + 1) + 1) *
                            c);
    }
  return sheet;
}

}  // namespace slgan
