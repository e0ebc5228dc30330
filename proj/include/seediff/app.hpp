#pragma once

// Command implementations behind the `seediff` executable. Each returns a
// process exit code: 0 ok, 1 usage, 2 input, 3 output.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "seediff/dump.hpp"
#include "seediff/errors.hpp"
#include "seediff/expansion.hpp"
#include "seediff/metrics.hpp"
#include "seediff/png.hpp"
#include "seediff/seeding.hpp"
#include "seediff/strategies.hpp"
#include "seediff/synth.hpp"
#include "seediff/tensor_io.hpp"

namespace seediff::app {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kInput = 2, kOutput = 3 };

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  write_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json schedule = nlohmann::json::array();
  for (Scale s : c.scale_schedule) schedule.push_back(s.side());
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"strategy", to_string(c.strategy)},
          {"schedule", schedule},
          {"background", c.background},
          {"background_alpha", c.effective_background_alpha()},
          {"reseed_from_ca", c.reseed_from_ca},
          {"ca_normalization",
           c.ca_normalization == CaNormalization::global ? "global" : "per_token"}};
}

struct GenerateOptions {
  fs::path dump_dir;
  fs::path out_dir;
  PipelineConfig config;
  bool trace = false;
  bool heatmap = false;
};

/// Writes mask.png, soft.atnb and optionally soft.png and trace/ into `out_dir`.
inline void write_outputs(const FinalMask& mask, const Trace* trace, const fs::path& out_dir,
                          bool heatmap) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  png::write_mask(out_dir / "mask.png", mask.side(), mask.binary);
  write_tensor(mask.soft.to_tensor(), out_dir / "soft.atnb");
  if (heatmap) png::write_heatmap(out_dir / "soft.png", mask.soft);
  if (trace) write_trace(*trace, out_dir / "trace");
}

inline int cmd_generate(const GenerateOptions& opt, std::ostream& err = std::cerr) {
  try {
    opt.config.validate();
  } catch (const InputError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }
  FinalMask mask;
  Trace trace;
  try {
    const AttentionDump dump = load_dump(opt.dump_dir);
    mask = run_strategy(dump, opt.config, opt.trace ? &trace : nullptr);
  } catch (const Error& e) {
    err << "invalid dump " << opt.dump_dir << ": " << e.what() << "\n";
    return kInput;
  }
  try {
    write_outputs(mask, opt.trace ? &trace : nullptr, opt.out_dir, opt.heatmap);
  } catch (const Error& e) {
    err << "cannot write outputs: " << e.what() << "\n";
    return kOutput;
  }
  return kOk;
}

struct BatchOptions {
  std::vector<fs::path> dumps;
  fs::path out_dir;
  PipelineConfig config;
  int jobs = 1;
  bool strict = false;
};

struct BatchEntry {
  fs::path dump;
  std::string name;
  bool ok = false;
  std::string error;
  std::string label;
  std::optional<std::string> image;
};

/// Reads dump directories from a list file: one path per line, blank lines
/// and '#' comments skipped, relative paths resolved against the list's
/// directory.
inline std::vector<fs::path> read_dump_list(const fs::path& list) {
  std::ifstream in(list);
  if (!in) throw IoError("cannot open " + list.string());
  std::vector<fs::path> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    fs::path p = line.substr(b, e - b + 1);
    out.push_back(p.is_absolute() ? p : list.parent_path() / p);
  }
  return out;
}

/// Processes every dump into out_dir/NNNN_<name>/ and writes dataset.json (a
/// list in input order) and config.json. Outputs do not depend on `jobs`.
inline int cmd_batch(const BatchOptions& opt, std::ostream& err = std::cerr) {
  try {
    opt.config.validate();
  } catch (const InputError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }
  if (opt.jobs < 1) {
    err << "usage error: --jobs must be >= 1\n";
    return kUsage;
  }
  std::error_code ec;
  fs::create_directories(opt.out_dir, ec);
  if (ec) {
    err << "cannot create " << opt.out_dir << ": " << ec.message() << "\n";
    return kOutput;
  }

  std::vector<BatchEntry> entries(opt.dumps.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%04zu", i);
    entries[i].dump = opt.dumps[i];
    entries[i].name = std::string(prefix) + "_" + opt.dumps[i].filename().string();
  }

  auto process = [&](BatchEntry& e) {
    try {
      const AttentionDump dump = load_dump(e.dump);
      e.label = dump.manifest.label();
      if (dump.manifest.image_path) {
        const fs::path img = *dump.manifest.image_path;
        e.image = (img.is_absolute() ? img : e.dump / img).lexically_normal().string();
      }
      const FinalMask mask = run_strategy(dump, opt.config);
      write_outputs(mask, nullptr, opt.out_dir / e.name, false);
      e.ok = true;
    } catch (const std::exception& ex) {
      e.ok = false;
      e.error = ex.what();
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) process(entries[i]);
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(opt.jobs), entries.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }

  nlohmann::json list = nlohmann::json::array();
  std::size_t failures = 0;
  for (const auto& e : entries) {
    nlohmann::json j{{"dump", e.dump.string()}, {"status", e.ok ? "ok" : "error"}};
    if (e.ok) {
      j["mask"] = e.name + "/mask.png";
      j["soft"] = e.name + "/soft.atnb";
      j["class"] = e.label;
      j["image"] = e.image ? nlohmann::json(*e.image) : nlohmann::json(nullptr);
    } else {
      ++failures;
      j["error"] = e.error;
      err << "dump " << e.dump << " failed: " << e.error << "\n";
    }
    list.push_back(std::move(j));
  }
  try {
    write_json(opt.out_dir / "dataset.json", list);
    write_json(opt.out_dir / "config.json", config_to_json(opt.config));
  } catch (const Error& e) {
    err << "cannot write dataset manifest: " << e.what() << "\n";
    return kOutput;
  }
  return failures > 0 && opt.strict ? kInput : kOk;
}

struct EvalOptions {
  fs::path pred_dir;
  fs::path gt_dir;
  std::optional<fs::path> class_map;  // JSON object: relative mask path -> class label
  std::optional<fs::path> report;     // defaults to pred_dir/eval_report.json
  MiouMode mode = MiouMode::pooled;
};

/// Pairs every PNG under gt_dir with the PNG at the same relative path under
/// pred_dir, then writes the report JSON and prints mIoU.
inline int cmd_eval(const EvalOptions& opt, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  std::map<std::string, std::string> classes;
  std::vector<std::vector<std::uint8_t>> preds, gts;
  std::vector<std::string> labels;
  try {
    if (opt.class_map) {
      std::ifstream in(*opt.class_map);
      if (!in) throw IoError("cannot open " + opt.class_map->string());
      classes = nlohmann::json::parse(in).get<std::map<std::string, std::string>>();
    }
    if (!fs::is_directory(opt.gt_dir)) throw InputError(opt.gt_dir.string() + " is not a directory");
    std::vector<std::string> rels;
    for (const auto& f : fs::recursive_directory_iterator(opt.gt_dir)) {
      if (f.is_regular_file() && f.path().extension() == ".png") {
        rels.push_back(fs::relative(f.path(), opt.gt_dir).generic_string());
      }
    }
    std::sort(rels.begin(), rels.end());
    if (rels.empty()) throw InputError("no ground-truth PNG under " + opt.gt_dir.string());
    for (const auto& rel : rels) {
      const fs::path pred = opt.pred_dir / rel;
      if (!fs::is_regular_file(pred)) throw InputError("missing prediction " + pred.string());
      preds.push_back(png::read_mask(pred));
      gts.push_back(png::read_mask(opt.gt_dir / rel));
      if (opt.class_map) {
        const auto it = classes.find(rel);
        if (it == classes.end()) throw InputError("class map has no entry for " + rel);
        labels.push_back(it->second);
      } else {
        labels.push_back("object");
      }
    }
  } catch (const std::exception& e) {
    err << "invalid evaluation input: " << e.what() << "\n";
    return kInput;
  }

  EvalReport report;
  try {
    std::vector<MaskPair> pairs;
    for (std::size_t i = 0; i < preds.size(); ++i) pairs.push_back({preds[i], gts[i], labels[i]});
    report = evaluate(pairs, opt.mode);
  } catch (const Error& e) {
    err << "invalid evaluation input: " << e.what() << "\n";
    return kInput;
  }
  try {
    write_json(opt.report.value_or(opt.pred_dir / "eval_report.json"), report.to_json());
  } catch (const Error& e) {
    err << "cannot write report: " << e.what() << "\n";
    return kOutput;
  }
  out << "mIoU: " << report.miou << "\n";
  return kOk;
}

struct InspectOptions {
  fs::path dump_dir;
  fs::path out_dir;
  std::vector<Coord> at;  // in 512x512 image pixels
  CaNormalization ca_normalization = CaNormalization::global;
};

/// Per-scale class CA heatmaps and SA-slice heatmaps at the requested image
/// points, plus inspect.json describing them.
inline int cmd_inspect(const InspectOptions& opt, std::ostream& err = std::cerr) {
  for (const auto& p : opt.at) {
    if (p.row < 0 || p.row >= kFullResolution || p.col < 0 || p.col >= kFullResolution) {
      err << "usage error: --at point outside the 512x512 image\n";
      return kUsage;
    }
  }
  AttentionDump dump;
  try {
    dump = load_dump(opt.dump_dir);
  } catch (const Error& e) {
    err << "invalid dump " << opt.dump_dir << ": " << e.what() << "\n";
    return kInput;
  }
  try {
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw IoError("cannot create " + opt.out_dir.string());
    nlohmann::json files = nlohmann::json::array();
    with_aggregates(dump, opt.ca_normalization, [&](const AggregateSet& aggs) {
      for (const auto& [scale, agg] : aggs) {
        const int s = scale.side();
        const int cell = kFullResolution / s;
        const std::string ca_name = "ca_" + std::to_string(s) + ".png";
        png::write_heatmap(opt.out_dir / ca_name,
                           class_channel(agg, dump.manifest.class_token_indices), cell);
        files.push_back({{"kind", "cross"}, {"scale", s}, {"path", ca_name}});
        for (const auto& p : opt.at) {
          const Coord c{p.row * s / kFullResolution, p.col * s / kFullResolution};
          const SoftMask slice = expand_region(agg.sa, SeedSet(s, s, {c}));
          const std::string name = "sa_" + std::to_string(s) + "_" + std::to_string(p.row) +
                                   "_" + std::to_string(p.col) + ".png";
          png::write_heatmap(opt.out_dir / name, slice, cell);
          files.push_back({{"kind", "self"},
                           {"scale", s},
                           {"at", {p.row, p.col}},
                           {"cell", {c.row, c.col}},
                           {"path", name}});
        }
      }
    });
    write_json(opt.out_dir / "inspect.json",
               {{"prompt", dump.manifest.prompt},
                {"class_token_indices", dump.manifest.class_token_indices},
                {"files", files}});
  } catch (const DegenerateMapError& e) {
    err << "invalid dump: " << e.what() << "\n";
    return kInput;
  } catch (const Error& e) {
    err << "cannot write inspection output: " << e.what() << "\n";
    return kOutput;
  }
  return kOk;
}

struct SynthOptions {
  synth::SyntheticSpec spec;
  fs::path out_dir;
};

/// Writes a synthetic dump plus truth.png (0/255) into out_dir.
inline int cmd_synth(const SynthOptions& opt, std::ostream& err = std::cerr) {
  synth::SyntheticCase c;
  try {
    c = synth::make_synthetic_dump(opt.spec);
  } catch (const Error& e) {
    err << "invalid synthetic specification: " << e.what() << "\n";
    return kUsage;
  }
  try {
    save_dump(c.dump, opt.out_dir);
    png::write_mask(opt.out_dir / "truth.png", kFullResolution, c.truth);
  } catch (const Error& e) {
    err << "cannot write synthetic dump: " << e.what() << "\n";
    return kOutput;
  }
  return kOk;
}

}  // namespace seediff::app
