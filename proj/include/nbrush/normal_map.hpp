#pragma once

#include "nbrush/mesh.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nbrush {

// Row-major image, row 0 at the top.
struct NormalMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3> normals;           // camera space; zero where uncovered
  std::vector<std::uint8_t> coverage;  // 1 where geometry was rasterized

  NormalMap() = default;
  NormalMap(int w, int h)
      : width(w), height(h), normals(static_cast<std::size_t>(w) * h, Vec3::Zero()),
        coverage(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t pixel_count() const { return normals.size(); }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool covered(std::size_t i) const { return coverage[i] != 0; }
  std::size_t covered_count() const;

  bool same_size(const NormalMap& o) const { return width == o.width && height == o.height; }

  // Covered normals rescaled to unit length; uncovered pixels zeroed.
  NormalMap renormalized() const;

  friend bool operator==(const NormalMap&, const NormalMap&) = default;
};

struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // 0 or 1

  PixelMask() = default;
  PixelMask(int w, int h, bool fill = false)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool operator[](std::size_t i) const { return values[i] != 0; }
  std::size_t count() const;

  friend bool operator==(const PixelMask&, const PixelMask&) = default;
};

// 16-bit RGBA PNG: RGB = round((n + 1) / 2 * 65535), alpha = 65535 where
// covered and 0 elsewhere. Decoding returns the dequantized values without
// renormalizing, so encode(decode(png)) reproduces png's pixel data exactly.
std::string encode_normal_png(const NormalMap& map);
NormalMap decode_normal_png(const std::string& bytes);

// Snaps every covered normal to the 16-bit grid, as a PNG round trip would.
NormalMap quantize_normals(const NormalMap& map);

// 8-bit grayscale, 255 = selected.
std::string encode_mask_png(const PixelMask& mask);
PixelMask decode_mask_png(const std::string& bytes);

}  // namespace nbrush
