#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smfn/resample.hpp"

namespace smfn {

/// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
};

/// Reads any PNG; gray(+alpha) becomes 1 channel, colour becomes RGB.
Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& image);

/// Gray plane <-> 8-bit image (values rounded and clamped).
Image8 plane_to_gray(const Plane& p);
Plane gray_to_plane(const Image8& img);

}  // namespace smfn
