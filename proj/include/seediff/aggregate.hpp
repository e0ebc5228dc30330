#pragma once

#include <span>
#include <vector>

#include "seediff/dump.hpp"
#include "seediff/errors.hpp"
#include "seediff/tensor.hpp"

namespace seediff {

/// How cross-attention maps are max-normalized before averaging. `global`
/// divides by the maximum over all axes; `per_token` divides each token
/// channel by its own maximum.
enum class CaNormalization { global, per_token };

namespace detail {

inline void normalize_into(const Tensor& map, AttentionKind kind,
                           CaNormalization mode, std::vector<double>& acc) {
  const auto values = map.values();
  if (kind == AttentionKind::cross && mode == CaNormalization::per_token) {
    const std::size_t tokens = map.shape().back();
    std::vector<double> channel_max(tokens, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      channel_max[i % tokens] = std::max(channel_max[i % tokens], double(values[i]));
    }
    if (*std::max_element(channel_max.begin(), channel_max.end()) <= 0.0) {
      throw DegenerateMapError("attention map has no positive entry");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double m = channel_max[i % tokens];
      if (m > 0.0) acc[i] += double(values[i]) / m;
    }
    return;
  }
  const double m = map.max();
  if (!(m > 0.0)) throw DegenerateMapError("attention map has no positive entry");
  for (std::size_t i = 0; i < values.size(); ++i) acc[i] += double(values[i]) / m;
}

inline void check_raw_entries(const Tensor& t) {
  for (float v : t.values()) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw InputError("attention map entries must be finite and >= 0");
    }
  }
}

}  // namespace detail

/// Divides `map` by its maximum. The result's maximum is exactly 1.
inline Tensor normalize_map(const RawAttentionMap& map,
                            CaNormalization mode = CaNormalization::global) {
  detail::check_raw_entries(map.data);
  std::vector<double> acc(map.data.size(), 0.0);
  detail::normalize_into(map.data, map.kind, mode, acc);
  std::vector<float> out(acc.begin(), acc.end());
  return Tensor(map.data.shape(), std::move(out));
}

namespace detail {

inline Tensor aggregate_pointers(std::span<const RawAttentionMap* const> maps,
                                 Scale scale, CaNormalization mode) {
  if (maps.empty()) throw InputError("aggregate_scale needs at least one map");
  const auto kind = maps.front()->kind;
  const Shape& shape = maps.front()->data.shape();
  for (const auto* m : maps) {
    if (m->scale != scale) throw InputError("aggregate_scale: mixed scales");
    if (m->kind != kind) throw InputError("aggregate_scale: mixed attention kinds");
    if (m->data.shape() != shape) throw InputError("aggregate_scale: mixed shapes");
    check_raw_entries(m->data);
  }

  std::vector<double> acc(element_count(shape), 0.0);
  for (const auto* m : maps) normalize_into(m->data, kind, mode, acc);

  const double n = static_cast<double>(maps.size());
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out[i] = static_cast<float>(std::min(1.0, acc[i] / n));
  }
  return Tensor(shape, std::move(out));
}

}  // namespace detail

/// Mean of the max-normalized maps of one kind at one scale, accumulated in
/// double and cast to float at the end.
inline Tensor aggregate_scale(std::span<const RawAttentionMap> maps, Scale scale,
                              CaNormalization mode = CaNormalization::global) {
  std::vector<const RawAttentionMap*> ptrs;
  ptrs.reserve(maps.size());
  for (const auto& m : maps) ptrs.push_back(&m);
  return detail::aggregate_pointers(ptrs, scale, mode);
}

/// Aggregates every declared scale of a full-mode dump. For aggregated dumps
/// this returns a copy of the stored aggregates.
inline AggregateSet aggregate_dump(const AttentionDump& dump,
                                   CaNormalization mode = CaNormalization::global) {
  if (dump.manifest.mode == DumpMode::aggregated) return dump.aggregates;
  AggregateSet out;
  for (Scale scale : dump.manifest.scales) {
    std::vector<const RawAttentionMap*> ca, sa;
    for (const auto& r : dump.raw) {
      if (r.scale != scale) continue;
      (r.kind == AttentionKind::cross ? ca : sa).push_back(&r);
    }
    out.emplace(scale, AggregatedAttention{scale, detail::aggregate_pointers(ca, scale, mode),
                                           detail::aggregate_pointers(sa, scale, mode)});
  }
  return out;
}

/// Calls `fn(const AggregateSet&)` with the dump's aggregates, computing them
/// only when the dump is in full mode.
template <typename Fn>
decltype(auto) with_aggregates(const AttentionDump& dump, CaNormalization mode, Fn&& fn) {
  if (dump.manifest.mode == DumpMode::aggregated) return fn(dump.aggregates);
  const AggregateSet computed = aggregate_dump(dump, mode);
  return fn(computed);
}

}  // namespace seediff
