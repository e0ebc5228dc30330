#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "seediff/errors.hpp"
#include "seediff/tensor.hpp"

namespace seediff::png {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

namespace detail {

inline void write(const std::filesystem::path& path, int width, int height,
                  png_uint_32 format, const std::uint8_t* pixels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels, 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace detail

inline void write_gray(const std::filesystem::path& path, int width, int height,
                       std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw InputError("gray image buffer does not match its size");
  }
  detail::write(path, width, height, PNG_FORMAT_GRAY, pixels.data());
}

inline void write_rgb(const std::filesystem::path& path, int width, int height,
                      std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height * 3) {
    throw InputError("RGB image buffer does not match its size");
  }
  detail::write(path, width, height, PNG_FORMAT_RGB, pixels.data());
}

/// Reads any PNG as 8-bit grayscale.
inline GrayImage read_gray(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }
  return out;
}

/// Binary mask as 0 / 255 grayscale.
inline void write_mask(const std::filesystem::path& path, int side,
                       std::span<const std::uint8_t> binary) {
  std::vector<std::uint8_t> px(binary.size());
  std::transform(binary.begin(), binary.end(), px.begin(),
                 [](std::uint8_t b) { return b ? std::uint8_t{255} : std::uint8_t{0}; });
  write_gray(path, side, side, px);
}

/// Reads a mask PNG; any non-zero pixel is foreground.
inline std::vector<std::uint8_t> read_mask(const std::filesystem::path& path, int* side = nullptr) {
  GrayImage img = read_gray(path);
  if (img.width != img.height) throw InputError(path.string() + " is not square");
  if (side) *side = img.width;
  for (auto& p : img.pixels) p = p ? 1 : 0;
  return std::move(img.pixels);
}

// Piecewise-linear dark-to-bright colormap (black, purple, orange, yellow).
inline std::array<std::uint8_t, 3> heat_color(double v) {
  static constexpr double stops[][3] = {
      {0, 0, 4}, {87, 16, 110}, {188, 55, 84}, {249, 142, 9}, {252, 255, 164}};
  v = std::clamp(v, 0.0, 1.0) * 4.0;
  const int i = std::min(static_cast<int>(v), 3);
  const double f = v - i;
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    out[static_cast<std::size_t>(c)] =
        static_cast<std::uint8_t>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
  }
  return out;
}

/// Renders a [0,1] map as an RGB heatmap, each cell enlarged to `cell` pixels.
inline void write_heatmap(const std::filesystem::path& path, const SoftMask& map, int cell = 1) {
  const int w = map.cols * cell, h = map.rows * cell;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto rgb = heat_color(map(y / cell, x / cell));
      std::copy(rgb.begin(), rgb.end(), px.begin() + (static_cast<std::ptrdiff_t>(y) * w + x) * 3);
    }
  }
  write_rgb(path, w, h, px);
}

}  // namespace seediff::png
