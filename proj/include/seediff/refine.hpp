#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seediff/errors.hpp"
#include "seediff/expansion.hpp"
#include "seediff/seeding.hpp"
#include "seediff/tensor.hpp"

namespace seediff {

/// 512x512 output: the thresholded soft map and its support.
struct FinalMask {
  SoftMask soft;                      // entries 0 or >= beta
  std::vector<std::uint8_t> binary;   // 1 where soft > 0
  std::string class_label;

  int side() const { return soft.rows; }
  std::size_t foreground() const {
    std::size_t n = 0;
    for (auto b : binary) n += b;
    return n;
  }
};

inline SoftMask invert_mask(const SoftMask& mask) {
  SoftMask out(mask.rows, mask.cols);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out.data[i] = static_cast<float>(1.0 - double(mask.data[i]));
  }
  return out;
}

/// Background map: seeds from the inverted object map, expanded over `sa`.
inline SoftMask background_mask(const Tensor& sa, const SoftMask& expanded, double alpha,
                                bool renormalize = true, Trace* trace = nullptr) {
  const SoftMask inverted = invert_mask(expanded);
  const SeedSet bg_seeds = extract_seeds(inverted, alpha);
  SoftMask bg = expand_region(sa, bg_seeds, renormalize);
  if (trace) {
    trace->add("inverted", inverted);
    trace->add("seeds_background", bg_seeds);
    trace->add("background", bg);
  }
  return bg;
}

/// (1 - bg) * object, elementwise.
inline SoftMask refine_with_background(const SoftMask& object_mask, const SoftMask& bg_mask) {
  if (!object_mask.same_shape(bg_mask)) {
    throw InputError("object and background masks differ in shape");
  }
  SoftMask out(object_mask.rows, object_mask.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = static_cast<float>((1.0 - double(bg_mask.data[i])) * double(object_mask.data[i]));
  }
  return out;
}

/// Keeps values >= beta, zeroes the rest; binary marks the kept support.
inline FinalMask binarize(SoftMask full, double beta, std::string label = {}) {
  const float t = threshold_f(beta);
  FinalMask out;
  out.binary.assign(full.size(), 0);
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (full.data[i] >= t && full.data[i] > 0.0f) {
      out.binary[i] = 1;
    } else {
      full.data[i] = 0.0f;
    }
  }
  out.soft = std::move(full);
  out.class_label = std::move(label);
  return out;
}

/// Upsamples to 512x512 (bilinear, half-pixel centers) and binarizes at beta.
inline FinalMask finalize(const SoftMask& refined, double beta, std::string label = {}) {
  if (!refined.is_square()) throw InputError("finalize expects a square map");
  SoftMask full = refined.rows == kFullResolution
                      ? refined
                      : upsample_bilinear(refined, kFullResolution);
  return binarize(std::move(full), beta, std::move(label));
}

}  // namespace seediff
