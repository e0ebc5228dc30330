#pragma once

// Synthetic attention dumps with known ground truth.
//
// The object is rasterized at 512x512 (pixel centers). At each scale, cell
// membership m in [0,1] is the object's area coverage of the cell, so coarse
// scales see blurrier blocks. Self-attention rows are a mixture of block
// affinities,
//
//   w(p,q) = m_p m_q e^{a_obj} + (1-m_p)(1-m_q) e^{a_bg}
//          + (m_p(1-m_q) + (1-m_p) m_q) e^{a_x} [+ e^{a_loc} g(|p-q|)],
//
// row-normalized like a softmax output. The optional Gaussian locality term g
// makes nearby pixels attend to each other regardless of class, which is what
// lets a misplaced seed leak into the background.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "seediff/aggregate.hpp"
#include "seediff/dump.hpp"
#include "seediff/errors.hpp"
#include "seediff/expansion.hpp"
#include "seediff/tensor.hpp"

namespace seediff::synth {

enum class ShapeKind { disk, rectangle, two_blobs };
enum class HotPlacement { center, top, spread };

struct Disk {
  double row = 256, col = 256, radius = 210;
};
struct Rect {
  double top = 100, left = 120, bottom = 380, right = 420;  // half-open, pixels
};

struct SyntheticSpec {
  ShapeKind shape = ShapeKind::disk;
  Disk disk;
  Rect rect;
  Disk second_disk{256, 380, 90};  // two_blobs only; disk is the first blob

  double object_affinity = 8.0;
  double background_affinity = 8.0;
  double cross_affinity = 0.0;
  std::optional<double> locality_affinity;  // logit of the locality term
  double locality_sigma = 40.0;             // in 512-pixel units

  int hot_pixels = 4;  // CA hot cells at the seed scale
  HotPlacement placement = HotPlacement::center;
  int leak_pixels = 0;  // CA hot cells placed just outside the object
  double ca_noise = 0.0;  // uniform noise on the class CA channel
  double sa_noise = 0.0;  // multiplicative noise on SA weights and full-mode maps
  // Uniform level of the non-class token channels.
  double token_noise = 0.2;
  std::uint64_t seed = 0;

  std::vector<Scale> scales = {Scale::of(16), Scale::of(32), Scale::of(64)};
  Scale seed_scale = Scale::of(16);
  int token_count = 8;
  int class_token = 5;
  std::string class_name = "object";
  std::string prompt = "a photo of a object";

  DumpMode mode = DumpMode::aggregated;
  int layers = 1;     // per scale, full mode
  int timesteps = 1;  // full mode
};

struct SyntheticCase {
  AttentionDump dump;
  std::vector<std::uint8_t> truth;  // 512x512, 1 = object
};

namespace detail {

// Uniform double in [0,1) from the top 53 bits; portable across standard
// libraries, unlike std::uniform_real_distribution.
inline double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool inside(const SyntheticSpec& spec, double y, double x) {
  auto in_disk = [&](const Disk& d) {
    const double dy = y - d.row, dx = x - d.col;
    return dy * dy + dx * dx <= d.radius * d.radius;
  };
  switch (spec.shape) {
    case ShapeKind::disk: return in_disk(spec.disk);
    case ShapeKind::rectangle:
      return y >= spec.rect.top && y < spec.rect.bottom && x >= spec.rect.left &&
             x < spec.rect.right;
    case ShapeKind::two_blobs: return in_disk(spec.disk) || in_disk(spec.second_disk);
  }
  return false;
}

inline std::vector<double> coverage(const std::vector<std::uint8_t>& truth, int side) {
  const int block = kFullResolution / side;
  std::vector<double> m(static_cast<std::size_t>(side) * side, 0.0);
  for (int y = 0; y < kFullResolution; ++y) {
    for (int x = 0; x < kFullResolution; ++x) {
      m[static_cast<std::size_t>(y / block) * side + x / block] +=
          truth[static_cast<std::size_t>(y) * kFullResolution + x];
    }
  }
  for (double& v : m) v /= static_cast<double>(block * block);
  return m;
}

inline std::vector<Coord> nearest_cells(const std::vector<Coord>& candidates, double row,
                                        double col, int count) {
  std::vector<Coord> sorted = candidates;
  std::stable_sort(sorted.begin(), sorted.end(), [&](const Coord& a, const Coord& b) {
    const double da = (a.row - row) * (a.row - row) + (a.col - col) * (a.col - col);
    const double db = (b.row - row) * (b.row - row) + (b.col - col) * (b.col - col);
    return da < db;
  });
  sorted.resize(std::min<std::size_t>(sorted.size(), static_cast<std::size_t>(count)));
  return sorted;
}

inline Tensor self_attention(const SyntheticSpec& spec, const std::vector<double>& m, int side,
                             std::mt19937_64& rng) {
  const double top = std::max({spec.object_affinity, spec.background_affinity,
                               spec.cross_affinity, spec.locality_affinity.value_or(-1e300)});
  const double eo = std::exp(spec.object_affinity - top);
  const double eb = std::exp(spec.background_affinity - top);
  const double ex = std::exp(spec.cross_affinity - top);
  const double el = spec.locality_affinity ? std::exp(*spec.locality_affinity - top) : 0.0;

  // Separable Gaussian over cell centers in 512-pixel units.
  std::vector<double> g(static_cast<std::size_t>(side) * side, 0.0);
  const double cell = static_cast<double>(kFullResolution) / side;
  for (int a = 0; a < side; ++a) {
    for (int b = 0; b < side; ++b) {
      const double d = (a - b) * cell;
      g[static_cast<std::size_t>(a) * side + b] =
          std::exp(-d * d / (2.0 * spec.locality_sigma * spec.locality_sigma));
    }
  }

  const auto s = static_cast<std::size_t>(side);
  const std::size_t n = s * s;
  Tensor sa({s, s, s, s});
  std::vector<double> row(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double mp = m[p];
    const std::size_t py = p / s, px = p % s;
    double total = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
      const double mq = m[q];
      double w = mp * mq * eo + (1 - mp) * (1 - mq) * eb + (mp * (1 - mq) + (1 - mp) * mq) * ex;
      if (el > 0.0) w += el * g[py * s + q / s] * g[px * s + q % s];
      if (spec.sa_noise > 0.0) w *= 1.0 + spec.sa_noise * unit(rng);
      row[q] = w;
      total += w;
    }
    float* out = sa.data() + p * n;
    for (std::size_t q = 0; q < n; ++q) out[q] = static_cast<float>(row[q] / total);
  }
  return sa;
}

}  // namespace detail

/// Builds a dump and its 512x512 ground truth. Deterministic in `spec.seed`.
inline SyntheticCase make_synthetic_dump(const SyntheticSpec& spec) {
  if (spec.scales.empty()) throw InputError("synthetic dump needs at least one scale");
  if (spec.token_count < 1 || spec.class_token < 0 || spec.class_token >= spec.token_count) {
    throw InputError("class token outside the token axis");
  }
  if (std::find(spec.scales.begin(), spec.scales.end(), spec.seed_scale) == spec.scales.end()) {
    throw InputError("seed scale must be one of the dump scales");
  }
  if (spec.hot_pixels < 1) throw InputError("hot_pixels must be >= 1");
  if (spec.leak_pixels < 0) throw InputError("leak_pixels must be >= 0");
  if (spec.ca_noise < 0.0 || spec.sa_noise < 0.0 || spec.token_noise < 0.0) throw InputError("noise must be >= 0");
  if (spec.mode == DumpMode::full) {
    if (spec.layers < 1 || spec.timesteps < 1) throw InputError("layers and timesteps must be >= 1");
    if (spec.layers * static_cast<int>(spec.scales.size()) > 16) {
      throw InputError("more than 16 layers in total");
    }
  }

  std::mt19937_64 rng(spec.seed);
  SyntheticCase out;
  out.truth.assign(static_cast<std::size_t>(kFullResolution) * kFullResolution, 0);
  double sum_y = 0, sum_x = 0, area = 0;
  for (int y = 0; y < kFullResolution; ++y) {
    for (int x = 0; x < kFullResolution; ++x) {
      if (detail::inside(spec, y + 0.5, x + 0.5)) {
        out.truth[static_cast<std::size_t>(y) * kFullResolution + x] = 1;
        sum_y += y + 0.5;
        sum_x += x + 0.5;
        area += 1;
      }
    }
  }
  if (area == 0) throw InputError("object lies outside the image");

  // Hot CA cells at the seed scale.
  const int ss = spec.seed_scale.side();
  const auto seed_cov = detail::coverage(out.truth, ss);
  std::vector<Coord> interior, boundary_bg, background;
  for (int r = 0; r < ss; ++r) {
    for (int c = 0; c < ss; ++c) {
      const double v = seed_cov[static_cast<std::size_t>(r) * ss + c];
      if (v >= 1.0) interior.push_back({r, c});
      if (v < 0.5) {
        background.push_back({r, c});
        bool touches = false;
        for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < ss && cc >= 0 && cc < ss &&
              seed_cov[static_cast<std::size_t>(rr) * ss + cc] >= 0.5) {
            touches = true;
          }
        }
        if (touches) boundary_bg.push_back({r, c});
      }
    }
  }
  if (interior.empty()) {
    throw InputError("object covers no full cell at the seed scale");
  }
  if (spec.hot_pixels > static_cast<int>(interior.size())) {
    throw InputError("more hot pixels than interior cells");
  }
  const double cell = static_cast<double>(kFullResolution) / ss;
  const double centroid_r = sum_y / area / cell - 0.5, centroid_c = sum_x / area / cell - 0.5;

  std::vector<Coord> hot;
  switch (spec.placement) {
    case HotPlacement::center:
      hot = detail::nearest_cells(interior, centroid_r, centroid_c, spec.hot_pixels);
      break;
    case HotPlacement::top:
      hot = detail::nearest_cells(interior, interior.front().row, interior.front().col,
                                  spec.hot_pixels);
      break;
    case HotPlacement::spread: {
      std::vector<Coord> pool = interior;
      for (std::size_t i = pool.size() - 1; i > 0; --i) {
        std::swap(pool[i], pool[rng() % (i + 1)]);
      }
      hot.assign(pool.begin(), pool.begin() + spec.hot_pixels);
      break;
    }
  }
  if (spec.leak_pixels > 0) {
    if (boundary_bg.empty()) throw InputError("no background cell touches the object");
    const int anchor_row = static_cast<int>(std::lround(centroid_r));
    Coord anchor = boundary_bg.front();
    for (const auto& c : boundary_bg) {
      if (c.row == anchor_row) {
        anchor = c;
        break;
      }
    }
    for (const auto& c : detail::nearest_cells(background, anchor.row, anchor.col,
                                               spec.leak_pixels)) {
      hot.push_back(c);
    }
  }
  SoftMask hot_map = SoftMask::square(ss);
  for (const auto& c : hot) hot_map(c.row, c.col) = 1.0f;

  // Base (single-map) attention per scale.
  struct Base {
    Scale scale;
    Tensor ca, sa;
  };
  std::vector<Base> bases;
  const auto tokens = static_cast<std::size_t>(spec.token_count);
  for (Scale scale : spec.scales) {
    const int s = scale.side();
    SoftMask channel;
    if (scale == spec.seed_scale) {
      channel = hot_map;
    } else if (s > ss) {
      // Finer CA: weaker focus over a uniform floor.
      const double focus = 1.0 / (1.0 + std::log2(static_cast<double>(s) / ss));
      channel = upsample_bilinear(hot_map, s);
      for (float& v : channel.data) v = static_cast<float>(focus * v + 0.3);
    } else {
      const int block = ss / s;
      channel = SoftMask::square(s);
      for (int r = 0; r < ss; ++r) {
        for (int c = 0; c < ss; ++c) {
          channel(r / block, c / block) += hot_map(r, c) / static_cast<float>(block * block);
        }
      }
    }
    const auto us = static_cast<std::size_t>(s);
    Tensor ca({us, us, tokens});
    for (std::size_t p = 0; p < us * us; ++p) {
      for (std::size_t t = 0; t < tokens; ++t) {
        double v = spec.token_noise * detail::unit(rng);
        if (static_cast<int>(t) == spec.class_token) {
          v = channel.data[p] + spec.ca_noise * detail::unit(rng);
        }
        ca[p * tokens + t] = static_cast<float>(v);
      }
    }
    const auto m = detail::coverage(out.truth, s);
    bases.push_back({scale, std::move(ca), detail::self_attention(spec, m, s, rng)});
  }

  auto& dump = out.dump;
  auto& man = dump.manifest;
  man.prompt = spec.prompt;
  man.class_token_indices = {spec.class_token};
  man.class_name = spec.class_name;
  man.mode = spec.mode;
  man.scales = spec.scales;
  man.timestep_count = spec.mode == DumpMode::full ? spec.timesteps : 1;
  man.generator.model_id = "synthetic";
  man.generator.sampler_seed = static_cast<std::int64_t>(spec.seed);

  if (spec.mode == DumpMode::aggregated) {
    for (auto& b : bases) {
      RawAttentionMap ca{AttentionKind::cross, b.scale, 1, 1, std::move(b.ca)};
      RawAttentionMap sa{AttentionKind::self, b.scale, 1, 1, std::move(b.sa)};
      dump.aggregates.emplace(b.scale, AggregatedAttention{b.scale, normalize_map(ca),
                                                           normalize_map(sa)});
    }
  } else {
    for (std::size_t si = 0; si < bases.size(); ++si) {
      const auto& b = bases[si];
      for (int l = 0; l < spec.layers; ++l) {
        const int layer = static_cast<int>(si) * spec.layers + l + 1;
        for (int t = 1; t <= spec.timesteps; ++t) {
          for (auto kind : {AttentionKind::cross, AttentionKind::self}) {
            Tensor data = kind == AttentionKind::cross ? b.ca : b.sa;
            const double gain = 0.5 + detail::unit(rng);
            for (float& v : data.values()) {
              double x = v * gain;
              if (spec.sa_noise > 0.0) x *= 1.0 + spec.sa_noise * detail::unit(rng);
              v = static_cast<float>(x);
            }
            dump.raw.push_back({kind, b.scale, layer, t, std::move(data)});
          }
        }
      }
    }
    seediff::detail::sort_raw(dump.raw);
  }
  validate_dump(dump);
  return out;
}

/// Noise-free disk; seeds near the center.
inline SyntheticSpec clean_disk() {
  SyntheticSpec s;
  s.shape = ShapeKind::disk;
  s.disk = {256, 256, 210};
  s.class_name = "disk";
  s.prompt = "a photo of a disk";
  return s;
}

/// Noise-free rectangle; edges fall at mixed phases of the 64-grid cells.
inline SyntheticSpec clean_rectangle() {
  SyntheticSpec s;
  s.shape = ShapeKind::rectangle;
  s.rect = {100, 120, 380, 420};
  s.class_name = "rectangle";
  s.prompt = "a photo of a rectangle";
  return s;
}

/// Two CA hot cells packed at the top of the object, with noisy CA elsewhere.
inline SyntheticSpec sparse_concentrated() {
  SyntheticSpec s;
  s.shape = ShapeKind::disk;
  s.disk = {256, 256, 200};
  s.hot_pixels = 2;
  s.placement = HotPlacement::top;
  s.ca_noise = 0.15;
  s.locality_affinity = 4.0;
  s.class_name = "sparse";
  s.prompt = "a photo of a sparse";
  return s;
}

/// CA seeds that partly sit on background next to the object boundary, with
/// a spatial-locality term in SA that lets them leak.
inline SyntheticSpec background_leak() {
  SyntheticSpec s;
  s.shape = ShapeKind::disk;
  s.disk = {256, 256, 200};
  s.hot_pixels = 4;
  s.placement = HotPlacement::center;
  s.leak_pixels = 3;
  s.locality_affinity = 6.0;
  s.class_name = "leak";
  s.prompt = "a photo of a leak";
  return s;
}

}  // namespace seediff::synth
