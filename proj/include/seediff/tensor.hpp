#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seediff/errors.hpp"

namespace seediff {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major float32 tensor.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  Tensor(Shape shape, std::vector<float> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != element_count(shape_)) {
      throw InputError("tensor value count " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> values() const { return data_; }
  std::span<float> values() { return data_; }
  const float* data() const { return data_.data(); }
  float* data() { return data_.data(); }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  /// Bit-level equality: same shape and identical float bit patterns.
  bool bit_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(),
                                         data_.size() * sizeof(float)) == 0);
  }

  float max() const {
    return data_.empty() ? 0.0f : *std::max_element(data_.begin(), data_.end());
  }
  float min() const {
    return data_.empty() ? 0.0f : *std::min_element(data_.begin(), data_.end());
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](float v) { return std::isfinite(v); });
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// One of the four attention resolutions of the denoising U-Net.
class Scale {
 public:
  static constexpr int kValid[] = {8, 16, 32, 64};

  constexpr Scale() = default;

  /// Throws InputError unless `side` is 8, 16, 32 or 64.
  static constexpr Scale of(int side) {
    if (!is_valid(side)) {
      throw InputError("invalid attention scale " + std::to_string(side) +
                       " (expected one of 8, 16, 32, 64)");
    }
    return Scale(side);
  }

  static constexpr bool is_valid(int side) {
    return side == 8 || side == 16 || side == 32 || side == 64;
  }

  constexpr int side() const { return side_; }
  constexpr std::size_t cells() const {
    return static_cast<std::size_t>(side_) * static_cast<std::size_t>(side_);
  }

  constexpr auto operator<=>(const Scale&) const = default;

 private:
  constexpr explicit Scale(int side) : side_(side) {}
  int side_ = 16;
};

/// Side length of the generated image and the final masks.
inline constexpr int kFullResolution = 512;

/// Real-valued 2D map (row-major). Pipeline maps are square at a scale; the
/// type itself allows any rows x cols.
struct SoftMask {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  SoftMask() = default;
  SoftMask(int r, int c, float fill = 0.0f)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  SoftMask(int r, int c, std::vector<float> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<std::size_t>(r) * c) {
      throw InputError("soft mask value count does not match " +
                       std::to_string(r) + "x" + std::to_string(c));
    }
  }

  static SoftMask square(int side, float fill = 0.0f) {
    return SoftMask(side, side, fill);
  }

  float operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  float& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }

  std::size_t size() const { return data.size(); }
  bool is_square() const { return rows == cols; }
  bool same_shape(const SoftMask& o) const {
    return rows == o.rows && cols == o.cols;
  }

  float max() const {
    return data.empty() ? 0.0f : *std::max_element(data.begin(), data.end());
  }
  float min() const {
    return data.empty() ? 0.0f : *std::min_element(data.begin(), data.end());
  }

  Tensor to_tensor() const {
    return Tensor({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)},
                  data);
  }

  bool operator==(const SoftMask&) const = default;
};

}  // namespace seediff
