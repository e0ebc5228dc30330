#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seediff/aggregate.hpp"
#include "seediff/dump.hpp"
#include "seediff/errors.hpp"
#include "seediff/seeding.hpp"
#include "seediff/tensor.hpp"
#include "seediff/tensor_io.hpp"

namespace seediff {

/// Divides `mask` by its maximum in place; an all-zero mask is left as is.
inline void renormalize_max(SoftMask& mask) {
  const float peak = mask.max();
  if (!(peak > 0.0f)) return;
  for (float& v : mask.data) v = static_cast<float>(double(v) / double(peak));
}

/// Mean of the SA slices sa[i,j,:,:] over the seeds, optionally
/// max-renormalized. Sums run in double in sorted seed order.
inline SoftMask expand_region(const Tensor& sa, const SeedSet& seeds,
                              bool renormalize = true) {
  const auto rows = static_cast<std::size_t>(seeds.rows());
  const auto cols = static_cast<std::size_t>(seeds.cols());
  if (sa.shape() != Shape{rows, cols, rows, cols}) {
    throw InputError("self attention shape " + to_string(sa.shape()) +
                     " does not match seed grid " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  const std::size_t plane = rows * cols;
  std::vector<double> acc(plane, 0.0);
  for (const Coord& s : seeds.coords()) {
    const float* slice = sa.data() + (static_cast<std::size_t>(s.row) * cols +
                                      static_cast<std::size_t>(s.col)) * plane;
    for (std::size_t q = 0; q < plane; ++q) acc[q] += slice[q];
  }
  const double n = static_cast<double>(seeds.size());
  SoftMask out(static_cast<int>(rows), static_cast<int>(cols));
  for (std::size_t q = 0; q < plane; ++q) out.data[q] = static_cast<float>(acc[q] / n);
  if (renormalize) renormalize_max(out);
  return out;
}

namespace detail {

struct AxisTap {
  int lo;
  int hi;
  double frac;  // weight of `hi`
};

// Half-pixel-center source coordinate, clamped to the edge samples.
inline std::vector<AxisTap> bilinear_taps(int source, int target) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(target));
  const double ratio = static_cast<double>(source) / static_cast<double>(target);
  for (int d = 0; d < target; ++d) {
    double x = (d + 0.5) * ratio - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(source - 1));
    const int lo = static_cast<int>(std::floor(x));
    const int hi = std::min(lo + 1, source - 1);
    taps[static_cast<std::size_t>(d)] = {lo, hi, x - lo};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize to a strictly larger grid, half-pixel centers, edge
/// clamping. Each output lies between the four samples it blends.
inline SoftMask upsample_bilinear(const SoftMask& mask, int target_rows, int target_cols) {
  if (target_rows <= mask.rows || target_cols <= mask.cols) {
    throw InputError("upsample target " + std::to_string(target_rows) + "x" +
                     std::to_string(target_cols) + " is not larger than " +
                     std::to_string(mask.rows) + "x" + std::to_string(mask.cols));
  }
  const auto ty = detail::bilinear_taps(mask.rows, target_rows);
  const auto tx = detail::bilinear_taps(mask.cols, target_cols);
  SoftMask out(target_rows, target_cols);
  for (int r = 0; r < target_rows; ++r) {
    const auto& y = ty[static_cast<std::size_t>(r)];
    for (int c = 0; c < target_cols; ++c) {
      const auto& x = tx[static_cast<std::size_t>(c)];
      const double a = mask(y.lo, x.lo), b = mask(y.lo, x.hi);
      const double e = mask(y.hi, x.lo), f = mask(y.hi, x.hi);
      const double top = a + x.frac * (b - a);
      const double bottom = e + x.frac * (f - e);
      out(r, c) = static_cast<float>(top + y.frac * (bottom - top));
    }
  }
  return out;
}

inline SoftMask upsample_bilinear(const SoftMask& mask, int target_side) {
  return upsample_bilinear(mask, target_side, target_side);
}

/// Intermediate artifacts of an expansion run, in production order.
struct Trace {
  struct MaskStage {
    std::string name;
    SoftMask mask;
  };
  struct SeedStage {
    std::string name;
    SeedSet seeds;
  };
  std::vector<MaskStage> masks;
  std::vector<SeedStage> seeds;

  void add(std::string name, const SoftMask& m) { masks.push_back({std::move(name), m}); }
  void add(std::string name, const SeedSet& s) { seeds.push_back({std::move(name), s}); }

  const SoftMask* find_mask(const std::string& name) const {
    for (const auto& m : masks) {
      if (m.name == name) return &m.mask;
    }
    return nullptr;
  }
};

namespace detail {

inline const AggregatedAttention& require_scale(const AggregateSet& aggs, Scale s) {
  const auto it = aggs.find(s);
  if (it == aggs.end()) {
    throw DumpError("dump has no aggregated attention at scale " + std::to_string(s.side()));
  }
  return it->second;
}

// CA channel at `scale`; falls back to the bilinear-upsampled seed-scale
// channel when the dump has no CA there.
inline SoftMask class_channel_at(const AggregateSet& aggs, Scale scale, Scale seed_scale,
                                 std::span<const int> tokens) {
  if (const auto it = aggs.find(scale); it != aggs.end()) {
    return class_channel(it->second, tokens);
  }
  auto base = class_channel(require_scale(aggs, seed_scale), tokens);
  if (scale == seed_scale) return base;
  auto up = upsample_bilinear(base, scale.side());
  renormalize_max(up);
  return up;
}

inline std::string stage_name(const char* what, std::size_t k) {
  return std::string(what) + "_" + std::to_string(k);
}

}  // namespace detail

/// Seeded expansion over the scale schedule: expand at s_k, upsample to
/// s_{k+1}, re-seed at alpha; the last scale is expanded only. Returns the
/// expanded map at the last schedule scale.
///
/// With `reseed_from_ca`, every scale is instead seeded from its own class CA
/// channel and expanded independently; the per-scale maps are upsampled to the
/// last scale, averaged and max-renormalized.
inline SoftMask iterative_expand(const AggregateSet& aggs, std::span<const int> tokens,
                                 const SeedSet& initial_seeds, const PipelineConfig& config,
                                 Trace* trace = nullptr) {
  const auto& schedule = config.scale_schedule;
  if (schedule.empty()) throw InputError("scale schedule is empty");
  for (Scale s : schedule) detail::require_scale(aggs, s);
  const Scale first = schedule.front();
  if (initial_seeds.rows() != first.side() || initial_seeds.cols() != first.side()) {
    throw InputError("initial seeds are not at the first schedule scale");
  }

  if (config.reseed_from_ca) {
    const Scale last = schedule.back();
    std::vector<double> acc(last.cells(), 0.0);
    for (std::size_t k = 0; k < schedule.size(); ++k) {
      const Scale s = schedule[k];
      SeedSet seeds = k == 0 ? initial_seeds
                             : extract_seeds(detail::class_channel_at(aggs, s, first, tokens),
                                             config.alpha);
      SoftMask expanded = expand_region(detail::require_scale(aggs, s).sa, seeds,
                                        config.renormalize_expansion);
      if (trace) {
        trace->add(detail::stage_name("seeds", k + 1), seeds);
        trace->add(detail::stage_name("expanded", k + 1), expanded);
      }
      if (s != last) expanded = upsample_bilinear(expanded, last.side());
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += expanded.data[i];
    }
    SoftMask out = SoftMask::square(last.side());
    for (std::size_t i = 0; i < acc.size(); ++i) {
      out.data[i] = static_cast<float>(acc[i] / static_cast<double>(schedule.size()));
    }
    renormalize_max(out);
    if (trace) trace->add("combined", out);
    return out;
  }

  SeedSet seeds = initial_seeds;
  for (std::size_t k = 0;; ++k) {
    const Scale s = schedule[k];
    if (trace) trace->add(detail::stage_name("seeds", k + 1), seeds);
    SoftMask expanded = expand_region(detail::require_scale(aggs, s).sa, seeds,
                                      config.renormalize_expansion);
    if (trace) trace->add(detail::stage_name("expanded", k + 1), expanded);
    if (k + 1 == schedule.size()) return expanded;
    SoftMask upsampled = upsample_bilinear(expanded, schedule[k + 1].side());
    if (trace) trace->add(detail::stage_name("upsampled", k + 2), upsampled);
    seeds = extract_seeds(upsampled, config.alpha);
  }
}

inline SoftMask iterative_expand(const AttentionDump& dump, const SeedSet& initial_seeds,
                                 const PipelineConfig& config, Trace* trace = nullptr) {
  return with_aggregates(dump, config.ca_normalization, [&](const AggregateSet& aggs) {
    return iterative_expand(aggs, dump.manifest.class_token_indices, initial_seeds, config,
                            trace);
  });
}

/// Seed coordinates as an (N,2) float tensor of (row, col) pairs.
inline Tensor seeds_to_tensor(const SeedSet& seeds) {
  std::vector<float> v;
  v.reserve(seeds.size() * 2);
  for (const auto& c : seeds.coords()) {
    v.push_back(static_cast<float>(c.row));
    v.push_back(static_cast<float>(c.col));
  }
  return Tensor({seeds.size(), 2}, std::move(v));
}

/// Writes every trace stage as an ATNB file plus index.json into `directory`.
inline void write_trace(const Trace& trace, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& m : trace.masks) {
    const std::string file = m.name + ".atnb";
    write_tensor(m.mask.to_tensor(), directory / file);
    entries.push_back({{"name", m.name},
                       {"kind", "mask"},
                       {"path", file},
                       {"shape", {m.mask.rows, m.mask.cols}}});
  }
  for (const auto& s : trace.seeds) {
    const std::string file = s.name + ".atnb";
    write_tensor(seeds_to_tensor(s.seeds), directory / file);
    entries.push_back({{"name", s.name},
                       {"kind", "seeds"},
                       {"path", file},
                       {"grid", {s.seeds.rows(), s.seeds.cols()}},
                       {"shape", {s.seeds.size(), 2}}});
  }
  const std::string text = nlohmann::json{{"stages", entries}}.dump(2) + "\n";
  write_bytes(directory / "index.json",
              {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace seediff
