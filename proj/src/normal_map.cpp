#include "nbrush/normal_map.hpp"

#include "nbrush/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

namespace nbrush {

std::size_t NormalMap::covered_count() const {
  return static_cast<std::size_t>(std::count_if(coverage.begin(), coverage.end(), [](auto c) { return c != 0; }));
}

NormalMap NormalMap::renormalized() const {
  NormalMap out = *this;
  for (std::size_t i = 0; i < out.normals.size(); ++i) {
    if (!out.covered(i)) {
      out.normals[i].setZero();
      continue;
    }
    const double len = out.normals[i].norm();
    if (len > 0.0) out.normals[i] /= len;
  }
  return out;
}

std::size_t PixelMask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
}

namespace {

std::uint16_t quantize(double n) {
  const double v = std::round((std::clamp(n, -1.0, 1.0) + 1.0) * 0.5 * 65535.0);
  return static_cast<std::uint16_t>(v);
}

double dequantize(std::uint16_t v) { return static_cast<double>(v) / 65535.0 * 2.0 - 1.0; }

struct WriteBuffer {
  std::string bytes;
};

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<WriteBuffer*>(png_get_io_ptr(png));
  buf->bytes.append(reinterpret_cast<const char*>(data), length);
}

void flush_callback(png_structp) {}

struct ReadBuffer {
  const std::string* bytes;
  std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* buf = static_cast<ReadBuffer*>(png_get_io_ptr(png));
  if (buf->offset + length > buf->bytes->size()) png_error(png, "truncated PNG data");
  std::memcpy(out, buf->bytes->data() + buf->offset, length);
  buf->offset += length;
}

void error_callback(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = message;
  png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

// rows: height pointers into a contiguous buffer of big-endian samples.
std::string write_png(int width, int height, int bit_depth, int color_type, std::vector<png_bytep>& rows) {
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, error_callback, warning_callback);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  WriteBuffer buffer;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encode failed: " + error);
  }
  png_set_write_fn(png, &buffer, write_callback, flush_callback);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(buffer.bytes);
}

struct DecodedPng {
  int width = 0, height = 0, bit_depth = 0, color_type = 0;
  std::vector<unsigned char> data;  // big-endian samples, rows contiguous
  std::size_t row_bytes = 0;
};

DecodedPng read_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw DataError("not a PNG image");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, error_callback, warning_callback);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadBuffer buffer{&bytes, 0};
  DecodedPng out;
  std::vector<png_bytep> rows;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("PNG decode failed: " + error);
  }
  png_set_read_fn(png, &buffer, read_callback);
  png_read_info(png, info);
  png_uint_32 w = 0, h = 0;
  int interlace = 0;
  png_get_IHDR(png, info, &w, &h, &out.bit_depth, &out.color_type, &interlace, nullptr, nullptr);
  if (w == 0 || h == 0 || w > 16384 || h > 16384) png_error(png, "unsupported PNG dimensions");
  if (interlace != PNG_INTERLACE_NONE) png_error(png, "interlaced PNG not supported");
  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.row_bytes = png_get_rowbytes(png, info);
  out.data.resize(out.row_bytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = out.data.data() + y * out.row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

NormalMap quantize_normals(const NormalMap& map) {
  NormalMap out = map;
  for (std::size_t i = 0; i < out.normals.size(); ++i) {
    if (!out.covered(i)) {
      out.normals[i].setZero();
      continue;
    }
    for (int c = 0; c < 3; ++c) out.normals[i][c] = dequantize(quantize(out.normals[i][c]));
  }
  return out;
}

std::string encode_normal_png(const NormalMap& map) {
  if (map.width <= 0 || map.height <= 0) throw DataError("cannot encode an empty normal map");
  const std::size_t row_bytes = static_cast<std::size_t>(map.width) * 8;
  std::vector<unsigned char> data(row_bytes * map.height);
  auto put = [&](std::size_t offset, std::uint16_t v) {
    data[offset] = static_cast<unsigned char>(v >> 8);
    data[offset + 1] = static_cast<unsigned char>(v & 0xff);
  };
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const std::size_t i = map.index(x, y);
      const std::size_t o = y * row_bytes + static_cast<std::size_t>(x) * 8;
      const bool covered = map.covered(i);
      const Vec3 n = covered ? map.normals[i] : Vec3::Zero();
      for (int c = 0; c < 3; ++c) put(o + 2 * c, quantize(n[c]));
      put(o + 6, covered ? 65535 : 0);
    }
  }
  std::vector<png_bytep> rows(map.height);
  for (int y = 0; y < map.height; ++y) rows[y] = data.data() + y * row_bytes;
  return write_png(map.width, map.height, 16, PNG_COLOR_TYPE_RGB_ALPHA, rows);
}

NormalMap decode_normal_png(const std::string& bytes) {
  const DecodedPng png = read_png(bytes);
  if (png.bit_depth != 16 || png.color_type != PNG_COLOR_TYPE_RGB_ALPHA) {
    throw DataError("normal map PNG must be 16-bit RGBA");
  }
  NormalMap map(png.width, png.height);
  auto get = [&](std::size_t offset) {
    return static_cast<std::uint16_t>((png.data[offset] << 8) | png.data[offset + 1]);
  };
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      const std::size_t o = y * png.row_bytes + static_cast<std::size_t>(x) * 8;
      const std::size_t i = map.index(x, y);
      if (get(o + 6) >= 32768) {
        map.coverage[i] = 1;
        map.normals[i] = Vec3(dequantize(get(o)), dequantize(get(o + 2)), dequantize(get(o + 4)));
      }
    }
  }
  return map;
}

std::string encode_mask_png(const PixelMask& mask) {
  if (mask.width <= 0 || mask.height <= 0) throw DataError("cannot encode an empty mask");
  std::vector<unsigned char> data(mask.values.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = mask.values[i] ? 255 : 0;
  std::vector<png_bytep> rows(mask.height);
  for (int y = 0; y < mask.height; ++y) rows[y] = data.data() + static_cast<std::size_t>(y) * mask.width;
  return write_png(mask.width, mask.height, 8, PNG_COLOR_TYPE_GRAY, rows);
}

PixelMask decode_mask_png(const std::string& bytes) {
  const DecodedPng png = read_png(bytes);
  if (png.bit_depth != 8 || png.color_type != PNG_COLOR_TYPE_GRAY) {
    throw DataError("mask PNG must be 8-bit grayscale");
  }
  PixelMask mask(png.width, png.height);
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      mask.values[static_cast<std::size_t>(y) * png.width + x] = png.data[y * png.row_bytes + x] >= 128 ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace nbrush
