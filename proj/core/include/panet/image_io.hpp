#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "panet/tensor.hpp"

namespace panet {

enum class ColorSpace { kGray, kRgb };

/// Interleaved 8-bit pixels, H x W x C.
struct ImageBuffer {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  ColorSpace color_space() const noexcept { return channels == 3 ? ColorSpace::kRgb : ColorSpace::kGray; }
};

enum class ImageFormat { kPng, kPnm };

/// Detects PNG or binary PGM/PPM (P5/P6, maxval 255) from the leading bytes.
/// Throws DataError naming the byte offset of the first problem.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);

/// 8-bit gray or RGB PNG, non-interlaced; output bytes depend only on content.
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
/// P5 for gray, P6 for RGB.
std::vector<std::uint8_t> encode_pnm(const ImageBuffer& img);

/// C x H x W tensor -> bytes: clamp to [0, 1], then floor(255 * v + 0.5).
ImageBuffer tensor_to_image(const Tensor<float>& t);
/// bytes -> C x H x W tensor with values v / 255.
Tensor<float> image_to_tensor(const ImageBuffer& img);

/// Loads PNG/PGM/PPM into a C x H x W tensor in [0, 1]. DataError on failure.
Tensor<float> load_image(const std::filesystem::path& path);

/// Writes PNG unless the extension is .pgm/.ppm. `t` is C x H x W or
/// 1 x C x H x W with C in {1, 3}. DataError on I/O failure.
void save_image(const Tensor<float>& t, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace panet
