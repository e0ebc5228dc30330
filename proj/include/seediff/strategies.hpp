#pragma once

#include <span>
#include <string>

#include "seediff/aggregate.hpp"
#include "seediff/dump.hpp"
#include "seediff/expansion.hpp"
#include "seediff/refine.hpp"
#include "seediff/seeding.hpp"

namespace seediff {

/// What a strategy needs from a dump: aggregates, class tokens and a label.
struct StrategyInput {
  const AggregateSet& aggregates;
  std::span<const int> tokens;
  std::string label;
};

namespace detail {

inline SoftMask to_full_resolution(const SoftMask& m) {
  return m.rows == kFullResolution ? m : upsample_bilinear(m, kFullResolution);
}

}  // namespace detail

/// Cross-attention aggregation baseline: the class CA channel at the seed
/// scale, upsampled and thresholded directly (no renormalization).
inline FinalMask run_caa(const StrategyInput& in, const PipelineConfig& config) {
  const auto& agg = detail::require_scale(in.aggregates, config.ca_seed_scale);
  const SoftMask channel = class_channel(agg, in.tokens, /*renormalize=*/false);
  return binarize(detail::to_full_resolution(channel), config.beta, in.label);
}

/// CA-SA baseline: the class CA channel, upsampled to the SA scale, weights a
/// mean of SA slices (a matrix-vector product over flattened space).
inline SoftMask ca_sa_propagate(const Tensor& sa, const SoftMask& weights) {
  const auto s = static_cast<std::size_t>(weights.rows);
  if (!weights.is_square() || sa.shape() != Shape{s, s, s, s}) {
    throw InputError("CA weights and SA tensor disagree in scale");
  }
  const std::size_t plane = s * s;
  double total = 0.0;
  std::vector<double> acc(plane, 0.0);
  for (std::size_t p = 0; p < plane; ++p) {
    const double w = weights.data[p];
    if (w == 0.0) continue;
    total += w;
    const float* slice = sa.data() + p * plane;
    for (std::size_t q = 0; q < plane; ++q) acc[q] += w * slice[q];
  }
  if (!(total > 0.0)) throw DegenerateMapError("class CA channel has no positive entry");
  SoftMask out(weights.rows, weights.cols);
  for (std::size_t q = 0; q < plane; ++q) out.data[q] = static_cast<float>(acc[q] / total);
  renormalize_max(out);
  return out;
}

inline FinalMask run_ca_sa(const StrategyInput& in, const PipelineConfig& config) {
  const auto& seed_agg = detail::require_scale(in.aggregates, config.ca_seed_scale);
  const auto& sa_agg = detail::require_scale(in.aggregates, config.ca_sa_scale);
  SoftMask weights = class_channel(seed_agg, in.tokens);
  if (config.ca_sa_scale != config.ca_seed_scale) {
    weights = upsample_bilinear(weights, config.ca_sa_scale.side());
  }
  const SoftMask propagated = ca_sa_propagate(sa_agg.sa, weights);
  return binarize(detail::to_full_resolution(propagated), config.beta, in.label);
}

/// Seed from CA, expand over the schedule, suppress the background, finalize.
inline FinalMask run_seediff(const StrategyInput& in, const PipelineConfig& config,
                             Trace* trace = nullptr) {
  config.validate();
  const auto& seed_agg = detail::require_scale(in.aggregates, config.ca_seed_scale);
  const SoftMask channel = class_channel(seed_agg, in.tokens);
  if (trace) trace->add("class_channel", channel);
  const SeedSet seeds = extract_seeds(channel, config.alpha);
  SoftMask mask = iterative_expand(in.aggregates, in.tokens, seeds, config, trace);
  if (config.background) {
    const auto& last = detail::require_scale(in.aggregates, config.scale_schedule.back());
    const SoftMask bg = background_mask(last.sa, mask, config.effective_background_alpha(),
                                        config.renormalize_expansion, trace);
    mask = refine_with_background(mask, bg);
    if (trace) trace->add("refined", mask);
  }
  return finalize(mask, config.beta, in.label);
}

inline FinalMask run_strategy(const StrategyInput& in, const PipelineConfig& config,
                              Trace* trace = nullptr) {
  config.validate();
  switch (config.strategy) {
    case Strategy::caa: return run_caa(in, config);
    case Strategy::ca_sa: return run_ca_sa(in, config);
    case Strategy::seediff: return run_seediff(in, config, trace);
  }
  throw InputError("unknown strategy");
}

/// Runs the configured strategy on a loaded dump.
inline FinalMask run_strategy(const AttentionDump& dump, const PipelineConfig& config,
                              Trace* trace = nullptr) {
  return with_aggregates(dump, config.ca_normalization, [&](const AggregateSet& aggs) {
    return run_strategy(StrategyInput{aggs, dump.manifest.class_token_indices,
                                      dump.manifest.label()},
                        config, trace);
  });
}

inline FinalMask run_caa(const AttentionDump& dump, const PipelineConfig& config) {
  auto c = config;
  c.strategy = Strategy::caa;
  return run_strategy(dump, c);
}

inline FinalMask run_ca_sa(const AttentionDump& dump, const PipelineConfig& config) {
  auto c = config;
  c.strategy = Strategy::ca_sa;
  return run_strategy(dump, c);
}

inline FinalMask run_seediff(const AttentionDump& dump, const PipelineConfig& config,
                             Trace* trace = nullptr) {
  auto c = config;
  c.strategy = Strategy::seediff;
  return run_strategy(dump, c, trace);
}

}  // namespace seediff
