#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rci/types.hpp"

namespace rci {

/// Decoded 8-bit raster, interleaved channels, row-major, no padding.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 3;  // 3 (RGB) or 4 (RGBA)
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(int w, int h, int c = 3) : width(w), height(h), channels(c), pixels(std::size_t(w) * h * c, 0) {}

  std::uint8_t* at(int x, int y) { return pixels.data() + (std::size_t(y) * width + x) * channels; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (std::size_t(y) * width + x) * channels;
  }

  bool operator==(const Raster&) const = default;
};

class ImageError : public Error {
 public:
  using Error::Error;
};

/// PNG or JPEG, sniffed from the signature. Gray and palette images expand to RGB.
Raster decode_image(std::span<const std::uint8_t> bytes);
Raster read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Raster& raster);
void write_png(const Raster& raster, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace rci
