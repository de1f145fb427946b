#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "slgan/tensor.hpp"

namespace slgan {

// 8-bit raster, interleaved HWC.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;
};

std::vector<std::uint8_t> encode_png(const RasterImage& image);
// Throws InputError on anything that is not a decodable PNG. Alpha is dropped.
RasterImage decode_png(std::span<const std::uint8_t> bytes);

RasterImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RasterImage& image);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// v / 127.5 - 1, into a [C, H, W] tensor.
Tensor raster_to_tensor(const RasterImage& image);
// round((x + 1) * 127.5) clamped to [0, 255]; chw points at C*H*W values.
RasterImage tensor_to_raster(const float* chw, int channels, int height, int width);
// Image i of an [N, C, H, W] batch.
RasterImage batch_image(const Tensor& batch, int index);

// Tiles the first rows*cols images of an [N, C, S, S] batch into one sheet, 1 px gutters.
RasterImage contact_sheet(const Tensor& batch, int rows, int cols);

}  // namespace slgan
