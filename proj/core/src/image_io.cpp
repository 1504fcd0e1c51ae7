#include "panet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace panet {

namespace {

// libpng reports errors by longjmp; these contexts carry the message and the
// read position out of the C callbacks.
struct PngReadContext {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
  char message[160];
};

struct PngWriteContext {
  std::vector<std::uint8_t>* out;
  char message[160];
};

void png_read_callback(png_structp png, png_bytep dst, png_size_t n) {
  auto* ctx = static_cast<PngReadContext*>(png_get_io_ptr(png));
  if (n > ctx->size - ctx->pos) png_error(png, "unexpected end of file");
  std::memcpy(dst, ctx->data + ctx->pos, n);
  ctx->pos += n;
}

void png_read_error(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngReadContext*>(png_get_error_ptr(png));
  std::snprintf(ctx->message, sizeof ctx->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_write_callback(png_structp png, png_bytep src, png_size_t n) {
  auto* ctx = static_cast<PngWriteContext*>(png_get_io_ptr(png));
  ctx->out->insert(ctx->out->end(), src, src + n);
}

void png_write_error(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngWriteContext*>(png_get_error_ptr(png));
  std::snprintf(ctx->message, sizeof ctx->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_silent_warning(png_structp, png_const_charp) {}

[[noreturn]] void data_error(std::size_t offset, const std::string& msg) {
  throw DataError("image decode error at byte " + std::to_string(offset) + ": " + msg);
}

// Runs every libpng call for one decode; returns false on a libpng error.
// Kept free of objects with non-trivial destructors so longjmp is safe.
bool png_decode_raw(PngReadContext* ctx, ImageBuffer* img, const char** reject) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, ctx, png_read_error, png_silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, ctx, png_read_callback);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int type = png_get_color_type(png, info);
  const int interlace = png_get_interlace_type(png, info);
  if (depth != 8) {
    *reject = "only 8-bit PNG is supported";
  } else if (type != PNG_COLOR_TYPE_GRAY && type != PNG_COLOR_TYPE_RGB) {
    *reject = "only grayscale or RGB PNG is supported";
  } else if (interlace != PNG_INTERLACE_NONE) {
    *reject = "interlaced PNG is not supported";
  }
  if (*reject != nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
  }
  img->height = h;
  img->width = w;
  img->channels = type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  img->pixels.resize(static_cast<std::size_t>(h) * w * img->channels);
  const std::size_t stride = static_cast<std::size_t>(w) * img->channels;
  for (png_uint_32 y = 0; y < h; ++y) png_read_row(png, img->pixels.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  PngReadContext ctx{bytes.data(), bytes.size(), 0, {}};
  ImageBuffer img;
  const char* reject = nullptr;
  if (!png_decode_raw(&ctx, &img, &reject)) data_error(ctx.pos, std::string("PNG: ") + ctx.message);
  if (reject != nullptr) data_error(ctx.pos, std::string("PNG: ") + reject);
  return img;
}

bool png_encode_raw(PngWriteContext* ctx, const ImageBuffer* img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, ctx, png_write_error, png_silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, ctx, png_write_callback, nullptr);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img->width), static_cast<png_uint_32>(img->height), 8,
               img->channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = img->width * img->channels;
  for (std::size_t y = 0; y < img->height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img->pixels.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void check_buffer(const ImageBuffer& img, const char* op) {
  if (img.channels != 1 && img.channels != 3) {
    throw InvalidParam(std::string(op) + ": channels must be 1 or 3, got " + std::to_string(img.channels));
  }
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.height * img.width * img.channels) {
    throw InvalidParam(std::string(op) + ": inconsistent image dimensions");
  }
}

// PNM header token reader: whitespace separated, '#' comments to end of line.
class PnmHeader {
 public:
  explicit PnmHeader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t next_number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) data_error(start, std::string("PNM: ") + what + " is too large");
      ++pos_;
    }
    if (pos_ == start) data_error(pos_, std::string("PNM: expected ") + what);
    return v;
  }
  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) data_error(pos_, "PNM: missing whitespace before raster");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 2;
};

ImageBuffer decode_pnm(std::span<const std::uint8_t> bytes) {
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  PnmHeader header(bytes);
  ImageBuffer img;
  img.width = header.next_number("width");
  img.height = header.next_number("height");
  const std::size_t maxval = header.next_number("maxval");
  if (img.width == 0 || img.height == 0) data_error(2, "PNM: zero image dimension");
  if (maxval != 255) data_error(2, "PNM: only maxval 255 is supported, got " + std::to_string(maxval));
  const std::size_t start = header.raster_start();
  img.channels = channels;
  const std::size_t need = img.width * img.height * channels;
  if (bytes.size() < start + need) {
    data_error(bytes.size(), "PNM: truncated raster, expected " + std::to_string(need) + " bytes from offset " +
                                 std::to_string(start));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                    bytes.begin() + static_cast<std::ptrdiff_t>(start + need));
  return img;
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return decode_pnm(bytes);
  data_error(0, "unrecognized image format (expected PNG or binary PGM/PPM)");
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  check_buffer(img, "encode_png");
  std::vector<std::uint8_t> out;
  PngWriteContext ctx{&out, {}};
  if (!png_encode_raw(&ctx, &img)) throw DataError(std::string("PNG encode failed: ") + ctx.message);
  return out;
}

std::vector<std::uint8_t> encode_pnm(const ImageBuffer& img) {
  check_buffer(img, "encode_pnm");
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

ImageBuffer tensor_to_image(const Tensor<float>& t) {
  Tensor<float> x = t;
  if (x.rank() == 4 && x.dim(0) == 1) x = x.reshape({x.dim(1), x.dim(2), x.dim(3)});
  if (x.rank() != 3 || (x.dim(0) != 1 && x.dim(0) != 3)) {
    throw ShapeMismatch("tensor_to_image: expected 1- or 3-channel C x H x W tensor, got " + shape_str(t.shape()));
  }
  ImageBuffer img;
  img.channels = x.dim(0);
  img.height = x.dim(1);
  img.width = x.dim(2);
  img.pixels.resize(x.numel());
  const std::size_t plane = img.height * img.width;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      float v = x[c * plane + i];
      v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
      img.pixels[i * img.channels + c] = static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f));
    }
  }
  return img;
}

Tensor<float> image_to_tensor(const ImageBuffer& img) {
  check_buffer(img, "image_to_tensor");
  Tensor<float> t({img.channels, img.height, img.width});
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < img.channels; ++c) t[c * plane + i] = img.pixels[i * img.channels + c] / 255.0f;
  }
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

Tensor<float> load_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return image_to_tensor(decode_image(bytes));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_image(const Tensor<float>& t, const std::filesystem::path& path) {
  const ImageBuffer img = tensor_to_image(t);
  const auto ext = path.extension().string();
  const bool pnm = ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
  write_file_bytes(path, pnm ? encode_pnm(img) : encode_png(img));
}

}  // namespace panet
