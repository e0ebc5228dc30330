#pragma once

#include <algorithm>
#include <compare>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seediff/aggregate.hpp"
#include "seediff/dump.hpp"
#include "seediff/errors.hpp"
#include "seediff/tensor.hpp"

namespace seediff {

struct Coord {
  int row = 0;
  int col = 0;
  constexpr auto operator<=>(const Coord&) const = default;
};

/// Non-empty set of grid coordinates, kept sorted in (row, col) order with
/// duplicates removed.
class SeedSet {
 public:
  SeedSet(int rows, int cols, std::vector<Coord> coords)
      : rows_(rows), cols_(cols), coords_(std::move(coords)) {
    if (coords_.empty()) throw InputError("seed set must be non-empty");
    for (const auto& c : coords_) {
      if (c.row < 0 || c.row >= rows_ || c.col < 0 || c.col >= cols_) {
        throw InputError("seed (" + std::to_string(c.row) + "," +
                         std::to_string(c.col) + ") outside the grid");
      }
    }
    std::sort(coords_.begin(), coords_.end());
    coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::span<const Coord> coords() const { return coords_; }
  std::size_t size() const { return coords_.size(); }
  bool contains(Coord c) const {
    return std::binary_search(coords_.begin(), coords_.end(), c);
  }

  bool operator==(const SeedSet&) const = default;

 private:
  int rows_;
  int cols_;
  std::vector<Coord> coords_;
};

enum class Strategy { caa, ca_sa, seediff };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::caa: return "caa";
    case Strategy::ca_sa: return "ca_sa";
    case Strategy::seediff: return "seediff";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(const std::string& s) {
  if (s == "caa") return Strategy::caa;
  if (s == "ca_sa") return Strategy::ca_sa;
  if (s == "seediff") return Strategy::seediff;
  return std::nullopt;
}

struct PipelineConfig {
  double alpha = 0.5;  // seed threshold
  double beta = 0.3;   // final binarization threshold
  std::vector<Scale> scale_schedule = {Scale::of(16), Scale::of(32), Scale::of(64)};
  Strategy strategy = Strategy::seediff;
  Scale ca_seed_scale = Scale::of(16);
  // SA resolution the CA-SA baseline propagates over.
  Scale ca_sa_scale = Scale::of(32);

  // Background expansion stage; off reproduces the IRE ablation row.
  bool background = true;
  // Seed threshold for background seeds; alpha when unset.
  std::optional<double> background_alpha;
  // Max-renormalize every expanded map before re-seeding.
  bool renormalize_expansion = true;
  // CRE ablation: seed every scale from its own CA map.
  bool reseed_from_ca = false;
  CaNormalization ca_normalization = CaNormalization::global;

  double effective_background_alpha() const { return background_alpha.value_or(alpha); }

  /// Throws InputError when a field is out of range.
  void validate() const {
    auto unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!unit(alpha)) throw InputError("alpha must lie in (0,1]");
    if (!unit(beta)) throw InputError("beta must lie in (0,1]");
    if (background_alpha && !unit(*background_alpha)) {
      throw InputError("background alpha must lie in (0,1]");
    }
    if (scale_schedule.empty()) throw InputError("scale schedule is empty");
    for (std::size_t i = 1; i < scale_schedule.size(); ++i) {
      if (!(scale_schedule[i - 1] < scale_schedule[i])) {
        throw InputError("scale schedule must be strictly increasing");
      }
    }
    if (ca_seed_scale != scale_schedule.front()) {
      throw InputError("ca_seed_scale must be the first schedule entry");
    }
  }
};

/// Threshold used for comparisons against float32 map values, so that a map
/// value equal to the threshold's float32 representation is included.
inline float threshold_f(double t) { return static_cast<float>(t); }

/// Mean of the selected token channels of a CA tensor (H,W,P). With
/// `renormalize`, the mean is divided by its maximum (an all-zero mean stays
/// zero).
inline SoftMask class_channel(const Tensor& ca, std::span<const int> token_indices,
                              bool renormalize = true) {
  if (ca.rank() != 3) throw InputError("cross attention tensor must be (H,W,P)");
  if (token_indices.empty()) throw InputError("no class token indices");
  const auto rows = static_cast<int>(ca.shape()[0]);
  const auto cols = static_cast<int>(ca.shape()[1]);
  const std::size_t tokens = ca.shape()[2];
  for (int idx : token_indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= tokens) {
      throw InputError("class token index " + std::to_string(idx) +
                       " outside token axis of length " + std::to_string(tokens));
    }
  }

  std::vector<double> mean(static_cast<std::size_t>(rows) * cols, 0.0);
  for (std::size_t p = 0; p < mean.size(); ++p) {
    double sum = 0.0;
    for (int idx : token_indices) sum += ca[p * tokens + static_cast<std::size_t>(idx)];
    mean[p] = sum / static_cast<double>(token_indices.size());
  }
  const double peak = *std::max_element(mean.begin(), mean.end());
  SoftMask out(rows, cols);
  for (std::size_t p = 0; p < mean.size(); ++p) {
    out.data[p] = static_cast<float>(renormalize && peak > 0.0 ? mean[p] / peak : mean[p]);
  }
  return out;
}

inline SoftMask class_channel(const AggregatedAttention& agg,
                              std::span<const int> token_indices,
                              bool renormalize = true) {
  return class_channel(agg.ca, token_indices, renormalize);
}

/// Coordinates whose value is >= alpha. When none qualifies, the single
/// argmax coordinate (smallest (row, col) on ties).
inline SeedSet extract_seeds(const SoftMask& mask, double alpha) {
  if (mask.size() == 0) throw InputError("cannot extract seeds from an empty map");
  const float t = threshold_f(alpha);
  std::vector<Coord> coords;
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) {
      if (mask(r, c) >= t) coords.push_back({r, c});
    }
  }
  if (coords.empty()) {
    // max_element returns the first maximum, i.e. the smallest row-major index.
    const auto it = std::max_element(mask.data.begin(), mask.data.end());
    const auto idx = static_cast<int>(it - mask.data.begin());
    coords.push_back({idx / mask.cols, idx % mask.cols});
  }
  return SeedSet(mask.rows, mask.cols, std::move(coords));
}

/// True when extract_seeds(mask, alpha) is decided by the threshold rather
/// than the argmax fallback.
inline bool seeds_by_threshold(const SoftMask& mask, double alpha) {
  const float t = threshold_f(alpha);
  return std::any_of(mask.data.begin(), mask.data.end(), [t](float v) { return v >= t; });
}

}  // namespace seediff
