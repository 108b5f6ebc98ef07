#pragma once

// Lossless PNG encode/decode (libpng), 8 or 16 bits, gray/gray-alpha/RGB/RGBA.
// Display images go through the sRGB transfer curve; codec planes are raw.

#include "dbs/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace dbs {

/// Raw samples, row-major, interleaved; values below 2^bit_depth.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;

  PngImage() = default;
  PngImage(int w, int h, int c, int bits)
      : width(w), height(h), channels(c), bit_depth(bits), samples(static_cast<std::size_t>(w) * h * c, 0) {}

  bool operator==(const PngImage&) const = default;
};

inline double srgb_encode(double linear) {
  const double v = std::clamp(linear, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

inline double srgb_decode(double encoded) {
  const double v = std::clamp(encoded, 0.0, 1.0);
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

namespace detail {

inline int png_color_type(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: return -1;
  }
}

struct PngErrorSink {
  char message[256] = {0};
};

extern "C" inline void png_error_to_sink(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
  if (sink) std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  png_longjmp(png, 1);
}

extern "C" inline void png_warning_ignore(png_structp, png_const_charp) {}

struct PngWriteBuffer {
  std::vector<std::uint8_t>* out;
};

extern "C" inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + len);
}

extern "C" inline void png_flush_noop(png_structp) {}

struct PngReadBuffer {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

extern "C" inline void png_read_from_buffer(png_structp png, png_bytep out, png_size_t len) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + len > buf->size) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, buf->data + buf->pos, len);
  buf->pos += len;
}

// libpng reports errors by longjmp, so these two functions keep only
// trivially destructible locals between setjmp and the libpng calls.
inline bool png_encode_raw(const PngImage& img, const std::uint8_t* rows, std::size_t stride, int level,
                           std::vector<std::uint8_t>* out, PngErrorSink* sink) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, sink, png_error_to_sink, png_warning_ignore);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  PngWriteBuffer buf{out};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &buf, png_write_to_vector, png_flush_noop);
  png_set_compression_level(png, level);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), img.bit_depth,
               png_color_type(img.channels), PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rows + static_cast<std::size_t>(y) * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct PngHeader {
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0, channels = 0;
};

inline bool png_decode_raw(const std::uint8_t* data, std::size_t size, PngHeader* hdr, std::vector<std::uint8_t>* pixels,
                           PngErrorSink* sink) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, sink, png_error_to_sink, png_warning_ignore);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  PngReadBuffer buf{data, size, 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &buf, png_read_from_buffer);
  png_read_info(png, info);
  hdr->width = png_get_image_width(png, info);
  hdr->height = png_get_image_height(png, info);
  hdr->bit_depth = png_get_bit_depth(png, info);
  hdr->color_type = png_get_color_type(png, info);
  if (hdr->color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (hdr->color_type == PNG_COLOR_TYPE_GRAY && hdr->bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  hdr->bit_depth = png_get_bit_depth(png, info);
  hdr->channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  if (static_cast<std::size_t>(hdr->height) * stride > pixels->max_size()) png_error(png, "PNG too large");
  pixels->resize(static_cast<std::size_t>(hdr->height) * stride);
  for (png_uint_32 y = 0; y < hdr->height; ++y) png_read_row(png, pixels->data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace detail

/// Encodes to PNG bytes. `level` is the zlib compression level (0-9).
inline std::vector<std::uint8_t> encode_png(const PngImage& img, int level = 6) {
  if (img.width <= 0 || img.height <= 0) throw FormatError("png: image must be non-empty");
  if (detail::png_color_type(img.channels) < 0) throw FormatError("png: channels must be 1-4");
  if (img.bit_depth != 8 && img.bit_depth != 16) throw FormatError("png: bit depth must be 8 or 16");
  if (img.samples.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw FormatError("png: sample count does not match dimensions");
  }
  const int bytes = img.bit_depth / 8;
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels * bytes;
  std::vector<std::uint8_t> rows(stride * static_cast<std::size_t>(img.height));
  const std::uint32_t max_value = (1u << img.bit_depth) - 1u;
  for (std::size_t k = 0; k < img.samples.size(); ++k) {
    const std::uint16_t v = img.samples[k];
    if (v > max_value) throw FormatError("png: sample exceeds bit depth");
    if (bytes == 1) {
      rows[k] = static_cast<std::uint8_t>(v);
    } else {
      rows[2 * k] = static_cast<std::uint8_t>(v >> 8);  // PNG stores 16-bit samples big-endian
      rows[2 * k + 1] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  std::vector<std::uint8_t> out;
  detail::PngErrorSink sink;
  if (!detail::png_encode_raw(img, rows.data(), stride, std::clamp(level, 0, 9), &out, &sink)) {
    throw FormatError(std::string("png: encode failed: ") + sink.message);
  }
  return out;
}

inline bool has_png_signature(const std::uint8_t* data, std::size_t size) {
  return size >= 8 && png_sig_cmp(const_cast<png_bytep>(data), 0, 8) == 0;
}

inline PngImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (!has_png_signature(bytes.data(), bytes.size())) throw FormatError("png: missing PNG signature");
  detail::PngHeader hdr;
  std::vector<std::uint8_t> pixels;
  detail::PngErrorSink sink;
  if (!detail::png_decode_raw(bytes.data(), bytes.size(), &hdr, &pixels, &sink)) {
    throw FormatError(std::string("png: decode failed: ") + sink.message);
  }
  if (hdr.bit_depth != 8 && hdr.bit_depth != 16) throw FormatError("png: unsupported bit depth");
  PngImage img(static_cast<int>(hdr.width), static_cast<int>(hdr.height), hdr.channels, hdr.bit_depth);
  if (hdr.bit_depth == 8) {
    std::copy(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(img.samples.size()), img.samples.begin());
  } else {
    for (std::size_t k = 0; k < img.samples.size(); ++k) {
      img.samples[k] = static_cast<std::uint16_t>((pixels[2 * k] << 8) | pixels[2 * k + 1]);
    }
  }
  return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void write_png(const std::string& path, const PngImage& img, int level = 6) {
  write_file_bytes(path, encode_png(img, level));
}

inline PngImage read_png(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

enum class PngTransfer { srgb, raw };

/// Quantizes a [0, 1] image (values clamped). In sRGB mode the color channels
/// are encoded with the sRGB curve; a 4th (alpha) channel stays linear.
template <class T> PngImage to_png(const Image<T>& img, int bit_depth = 8, PngTransfer transfer = PngTransfer::srgb) {
  PngImage out(img.width, img.height, img.channels, bit_depth);
  const double scale = double((1u << bit_depth) - 1u);
  for (std::size_t k = 0; k < img.data.size(); ++k) {
    const int c = static_cast<int>(k % static_cast<std::size_t>(img.channels));
    const bool color = transfer == PngTransfer::srgb && !(img.channels == 4 && c == 3) && !(img.channels == 2 && c == 1);
    double v = std::clamp(double(img.data[k]), 0.0, 1.0);
    if (color) v = srgb_encode(v);
    out.samples[k] = static_cast<std::uint16_t>(std::lround(v * scale));
  }
  return out;
}

template <class T> Image<T> from_png(const PngImage& png, PngTransfer transfer = PngTransfer::srgb) {
  Image<T> out(png.width, png.height, png.channels);
  const double scale = double((1u << png.bit_depth) - 1u);
  for (std::size_t k = 0; k < png.samples.size(); ++k) {
    const int c = static_cast<int>(k % static_cast<std::size_t>(png.channels));
    const bool color = transfer == PngTransfer::srgb && !(png.channels == 4 && c == 3) && !(png.channels == 2 && c == 1);
    double v = double(png.samples[k]) / scale;
    if (color) v = srgb_decode(v);
    out.data[k] = T(v);
  }
  return out;
}

}  // namespace dbs
