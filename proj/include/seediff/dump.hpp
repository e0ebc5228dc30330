#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "seediff/errors.hpp"
#include "seediff/tensor.hpp"
#include "seediff/tensor_io.hpp"

namespace seediff {

enum class AttentionKind { cross, self };
enum class DumpMode { aggregated, full };

inline std::string to_string(AttentionKind kind) {
  return kind == AttentionKind::cross ? "cross" : "self";
}
inline std::string to_string(DumpMode mode) {
  return mode == DumpMode::aggregated ? "aggregated" : "full";
}

/// Expected tensor shape for a map of `kind` at `scale` with `tokens` prompt
/// tokens: (s,s,P) for cross attention, (s,s,s,s) for self attention.
inline Shape attention_shape(AttentionKind kind, Scale scale, std::size_t tokens) {
  const auto s = static_cast<std::size_t>(scale.side());
  return kind == AttentionKind::cross ? Shape{s, s, tokens} : Shape{s, s, s, s};
}

/// One softmax output of a single layer at a single denoising step, already
/// reduced over attention heads.
struct RawAttentionMap {
  AttentionKind kind = AttentionKind::cross;
  Scale scale;
  int layer = 1;     // 1..16
  int timestep = 1;  // 1..T
  Tensor data;
};

/// Per-scale output of the resolution-grouped aggregation: CA (s,s,P) and SA
/// (s,s,s,s), entries in [0,1].
struct AggregatedAttention {
  Scale scale;
  Tensor ca;
  Tensor sa;
};

using AggregateSet = std::map<Scale, AggregatedAttention>;

struct GeneratorInfo {
  std::optional<std::string> model_id;
  std::optional<std::int64_t> sampler_seed;
};

struct DumpManifest {
  std::string prompt;
  std::vector<int> class_token_indices;
  int timestep_count = 1;
  DumpMode mode = DumpMode::aggregated;
  std::vector<Scale> scales;
  std::optional<std::string> image_path;
  GeneratorInfo generator;
  // Optional; used as the dataset label when present.
  std::optional<std::string> class_name;

  std::string label() const { return class_name.value_or(prompt); }
};

/// A captured generation session. Aggregated dumps fill `aggregates`; full
/// dumps fill `raw`, sorted by (kind, scale, layer, timestep).
struct AttentionDump {
  DumpManifest manifest;
  AggregateSet aggregates;
  std::vector<RawAttentionMap> raw;
  std::filesystem::path directory;

  /// Number of prompt tokens P (last CA axis).
  std::size_t token_count() const {
    if (!aggregates.empty()) return aggregates.begin()->second.ca.shape().back();
    for (const auto& m : raw) {
      if (m.kind == AttentionKind::cross) return m.data.shape().back();
    }
    return 0;
  }
};

namespace detail {

inline auto raw_key(const RawAttentionMap& m) {
  return std::make_tuple(m.kind, m.scale, m.layer, m.timestep);
}

inline void sort_raw(std::vector<RawAttentionMap>& raw) {
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) {
    return raw_key(a) < raw_key(b);
  });
}

inline bool entries_nonnegative_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f; });
}

inline bool entries_unit_interval(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DumpError(where + ": missing required key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DumpError(where + ": key '" + key + "' has the wrong type: " + e.what());
  }
}

inline AttentionKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "cross") return AttentionKind::cross;
  if (s == "self") return AttentionKind::self;
  throw DumpError(where + ": unknown tensor kind '" + s + "'");
}

inline Scale parse_scale(int side, const std::string& where) {
  if (!Scale::is_valid(side)) {
    throw DumpError(where + ": invalid scale " + std::to_string(side));
  }
  return Scale::of(side);
}

}  // namespace detail

/// Checks every AttentionDump invariant; throws DumpError on the first
/// violation.
inline void validate_dump(const AttentionDump& dump) {
  const auto& m = dump.manifest;
  if (m.class_token_indices.empty()) {
    throw DumpError("class_token_indices is empty");
  }
  if (m.timestep_count < 1) throw DumpError("timestep_count must be >= 1");
  if (m.scales.empty()) throw DumpError("manifest declares no scales");
  std::set<Scale> declared(m.scales.begin(), m.scales.end());
  if (declared.size() != m.scales.size()) throw DumpError("duplicate scale in manifest");

  std::optional<std::size_t> tokens;
  auto check_tokens = [&](const Tensor& ca, const std::string& where) {
    const std::size_t p = ca.shape().back();
    if (tokens && *tokens != p) {
      throw DumpError(where + ": token axis " + std::to_string(p) +
                      " differs from " + std::to_string(*tokens));
    }
    tokens = p;
  };
  auto check_shape = [](const Tensor& t, AttentionKind kind, Scale scale,
                        const std::string& where) {
    const auto s = static_cast<std::size_t>(scale.side());
    const auto& sh = t.shape();
    const bool ok = kind == AttentionKind::cross
                        ? (sh.size() == 3 && sh[0] == s && sh[1] == s && sh[2] >= 1)
                        : sh == Shape{s, s, s, s};
    if (!ok) {
      throw DumpError(where + ": shape " + to_string(sh) + " inconsistent with " +
                      to_string(kind) + " attention at scale " +
                      std::to_string(scale.side()));
    }
  };

  if (m.mode == DumpMode::aggregated) {
    if (!dump.raw.empty()) throw DumpError("aggregated dump carries raw maps");
    for (Scale s : declared) {
      if (!dump.aggregates.contains(s)) {
        throw DumpError("no aggregated tensors for scale " + std::to_string(s.side()));
      }
    }
    for (const auto& [scale, agg] : dump.aggregates) {
      const std::string where = "scale " + std::to_string(scale.side());
      if (!declared.contains(scale)) throw DumpError(where + " not declared in manifest");
      check_shape(agg.ca, AttentionKind::cross, scale, where + " cross");
      check_shape(agg.sa, AttentionKind::self, scale, where + " self");
      check_tokens(agg.ca, where);
      if (!detail::entries_unit_interval(agg.ca) || !detail::entries_unit_interval(agg.sa)) {
        throw DumpError(where + ": aggregated entries must lie in [0,1]");
      }
    }
  } else {
    if (!dump.aggregates.empty()) throw DumpError("full dump carries aggregates");
    std::set<std::tuple<AttentionKind, Scale, int, int>> seen;
    std::set<std::pair<AttentionKind, Scale>> kinds_present;
    for (const auto& r : dump.raw) {
      const std::string where = to_string(r.kind) + " scale " +
                                std::to_string(r.scale.side()) + " layer " +
                                std::to_string(r.layer) + " timestep " +
                                std::to_string(r.timestep);
      if (!declared.contains(r.scale)) throw DumpError(where + ": scale not declared");
      if (r.layer < 1 || r.layer > 16) throw DumpError(where + ": layer outside 1..16");
      if (r.timestep < 1 || r.timestep > m.timestep_count) {
        throw DumpError(where + ": timestep outside 1..timestep_count");
      }
      if (!seen.insert(detail::raw_key(r)).second) throw DumpError(where + ": duplicate map");
      check_shape(r.data, r.kind, r.scale, where);
      if (r.kind == AttentionKind::cross) check_tokens(r.data, where);
      if (!detail::entries_nonnegative_finite(r.data)) {
        throw DumpError(where + ": entries must be finite and >= 0");
      }
      kinds_present.emplace(r.kind, r.scale);
    }
    for (Scale s : declared) {
      for (auto kind : {AttentionKind::cross, AttentionKind::self}) {
        if (!kinds_present.contains({kind, s})) {
          throw DumpError("no " + to_string(kind) + " maps for scale " +
                          std::to_string(s.side()));
        }
      }
    }
  }

  for (int idx : m.class_token_indices) {
    if (idx < 0 || !tokens || static_cast<std::size_t>(idx) >= *tokens) {
      throw DumpError("class token index " + std::to_string(idx) +
                      " outside prompt token length " +
                      std::to_string(tokens.value_or(0)));
    }
  }
}

inline nlohmann::json manifest_to_json(const DumpManifest& m) {
  nlohmann::json j;
  j["prompt"] = m.prompt;
  j["class_token_indices"] = m.class_token_indices;
  j["timestep_count"] = m.timestep_count;
  j["mode"] = to_string(m.mode);
  auto& scales = j["scales"] = nlohmann::json::array();
  for (Scale s : m.scales) scales.push_back(s.side());
  if (m.image_path) j["image_path"] = *m.image_path;
  if (m.class_name) j["class_name"] = *m.class_name;
  nlohmann::json gen = nlohmann::json::object();
  if (m.generator.model_id) gen["model_id"] = *m.generator.model_id;
  if (m.generator.sampler_seed) gen["sampler_seed"] = *m.generator.sampler_seed;
  j["generator"] = gen;
  return j;
}

/// Loads and validates the dump in `directory` (manifest.json + ATNB files).
/// Unknown manifest keys are ignored.
inline AttentionDump load_dump(const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = directory / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw DumpError("no manifest.json in " + directory.string());
  }

  nlohmann::json j;
  {
    std::ifstream in(manifest_path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DumpError("manifest.json is not valid JSON: " + std::string(e.what()));
    }
  }
  if (!j.is_object()) throw DumpError("manifest.json must hold an object");

  const std::string where = "manifest";
  AttentionDump dump;
  dump.directory = directory;
  auto& m = dump.manifest;
  m.prompt = detail::required<std::string>(j, "prompt", where);
  m.class_token_indices = detail::required<std::vector<int>>(j, "class_token_indices", where);
  m.timestep_count = detail::required<int>(j, "timestep_count", where);
  const auto mode = detail::required<std::string>(j, "mode", where);
  if (mode == "aggregated") {
    m.mode = DumpMode::aggregated;
  } else if (mode == "full") {
    m.mode = DumpMode::full;
  } else {
    throw DumpError("unknown dump mode '" + mode + "'");
  }
  for (int side : detail::required<std::vector<int>>(j, "scales", where)) {
    m.scales.push_back(detail::parse_scale(side, where));
  }
  if (j.contains("image_path") && j["image_path"].is_string()) {
    m.image_path = j["image_path"].get<std::string>();
  }
  if (j.contains("class_name") && j["class_name"].is_string()) {
    m.class_name = j["class_name"].get<std::string>();
  }
  if (j.contains("generator") && j["generator"].is_object()) {
    const auto& g = j["generator"];
    if (g.contains("model_id") && g["model_id"].is_string()) {
      m.generator.model_id = g["model_id"].get<std::string>();
    }
    if (g.contains("sampler_seed") && g["sampler_seed"].is_number_integer()) {
      m.generator.sampler_seed = g["sampler_seed"].get<std::int64_t>();
    }
  }

  const auto entries = detail::required<nlohmann::json>(j, "tensors", where);
  if (!entries.is_array()) throw DumpError("manifest 'tensors' must be an array");

  std::map<Scale, std::optional<Tensor>> ca, sa;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string ew = "tensors[" + std::to_string(i) + "]";
    if (!e.is_object()) throw DumpError(ew + " must be an object");
    const auto kind = detail::parse_kind(detail::required<std::string>(e, "kind", ew), ew);
    const auto scale = detail::parse_scale(detail::required<int>(e, "scale", ew), ew);
    const auto rel = detail::required<std::string>(e, "path", ew);
    const auto declared_shape = detail::required<Shape>(e, "shape", ew);

    const fs::path file = directory / rel;
    if (!fs::is_regular_file(file)) {
      throw DumpError(ew + ": tensor file " + file.string() + " is missing");
    }
    Tensor t;
    try {
      t = read_tensor(file);
    } catch (const Error& err) {
      throw DumpError(ew + ": " + err.what());
    }
    if (t.shape() != declared_shape) {
      throw DumpError(ew + ": file shape " + to_string(t.shape()) +
                      " differs from manifest shape " + to_string(declared_shape));
    }

    if (m.mode == DumpMode::aggregated) {
      auto& slot = (kind == AttentionKind::cross ? ca : sa)[scale];
      if (slot) {
        throw DumpError(ew + ": second " + to_string(kind) + " tensor for scale " +
                        std::to_string(scale.side()));
      }
      slot = std::move(t);
    } else {
      RawAttentionMap r;
      r.kind = kind;
      r.scale = scale;
      r.layer = detail::required<int>(e, "layer", ew);
      r.timestep = detail::required<int>(e, "timestep", ew);
      r.data = std::move(t);
      dump.raw.push_back(std::move(r));
    }
  }

  if (m.mode == DumpMode::aggregated) {
    for (Scale s : m.scales) {
      if (!ca[s] || !sa[s]) {
        throw DumpError("scale " + std::to_string(s.side()) +
                        " lacks a cross or self attention tensor");
      }
    }
    for (auto& [scale, t] : ca) {
      if (!t) continue;
      if (!sa[scale]) {
        throw DumpError("scale " + std::to_string(scale.side()) + " lacks a self attention tensor");
      }
      dump.aggregates.emplace(scale, AggregatedAttention{scale, std::move(*t), std::move(*sa[scale])});
    }
    for (auto& [scale, t] : sa) {
      if (t && !dump.aggregates.contains(scale)) {
        throw DumpError("scale " + std::to_string(scale.side()) + " lacks a cross attention tensor");
      }
    }
  }
  detail::sort_raw(dump.raw);
  validate_dump(dump);
  return dump;
}

/// Writes `dump` to `directory` (created if needed): one ATNB file per tensor
/// and manifest.json, written last.
inline void save_dump(const AttentionDump& dump, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  validate_dump(dump);
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());

  nlohmann::json tensors = nlohmann::json::array();
  auto emit = [&](const Tensor& t, AttentionKind kind, Scale scale,
                  std::optional<std::pair<int, int>> lt) {
    std::string name = to_string(kind) + "_" + std::to_string(scale.side());
    if (lt) name += "_l" + std::to_string(lt->first) + "_t" + std::to_string(lt->second);
    name += ".atnb";
    write_tensor(t, directory / name);
    nlohmann::json e{{"kind", to_string(kind)},
                     {"scale", scale.side()},
                     {"path", name},
                     {"shape", t.shape()}};
    if (lt) {
      e["layer"] = lt->first;
      e["timestep"] = lt->second;
    }
    tensors.push_back(std::move(e));
  };

  if (dump.manifest.mode == DumpMode::aggregated) {
    for (const auto& [scale, agg] : dump.aggregates) {
      emit(agg.ca, AttentionKind::cross, scale, std::nullopt);
      emit(agg.sa, AttentionKind::self, scale, std::nullopt);
    }
  } else {
    for (const auto& r : dump.raw) {
      emit(r.data, r.kind, r.scale, std::make_pair(r.layer, r.timestep));
    }
  }

  auto j = manifest_to_json(dump.manifest);
  j["tensors"] = std::move(tensors);
  const std::string text = j.dump(2) + "\n";
  write_bytes(directory / "manifest.json",
              {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace seediff
