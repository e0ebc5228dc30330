#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seediff/app.hpp"

namespace {

using namespace seediff;

std::vector<Scale> parse_scales(const std::string& text) {
  std::vector<Scale> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const int side = std::stoi(item, &used);
    if (used != item.size()) throw InputError("bad scale '" + item + "'");
    out.push_back(Scale::of(side));
  }
  if (out.empty()) throw InputError("empty scale list");
  return out;
}

Coord parse_point(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw InputError("expected ROW,COL, got '" + text + "'");
  std::size_t a = 0, b = 0;
  const std::string r = text.substr(0, comma), c = text.substr(comma + 1);
  Coord p{std::stoi(r, &a), std::stoi(c, &b)};
  if (a != r.size() || b != c.size()) throw InputError("expected ROW,COL, got '" + text + "'");
  return p;
}

struct PipelineFlags {
  double alpha = 0.5;
  double beta = 0.3;
  std::string strategy = "seediff";
  std::string schedule = "16,32,64";
  bool no_background = false;
  std::optional<double> background_alpha;
  bool reseed_from_ca = false;
  bool per_token = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "Seed threshold in (0,1]")->capture_default_str();
    cmd->add_option("--beta", beta, "Binarization threshold in (0,1]")->capture_default_str();
    cmd->add_option("--strategy", strategy, "caa | ca_sa | seediff")->capture_default_str();
    cmd->add_option("--schedule", schedule, "Comma-separated scale schedule")
        ->capture_default_str();
    cmd->add_flag("--no-background", no_background, "Skip background elimination");
    cmd->add_option("--background-alpha", background_alpha,
                    "Seed threshold on the inverted mask (defaults to --alpha)");
    cmd->add_flag("--reseed-from-ca", reseed_from_ca,
                  "Seed every scale from its own cross-attention");
    cmd->add_flag("--per-token-ca", per_token, "Normalize cross-attention per token channel");
  }

  PipelineConfig build() const {
    PipelineConfig c;
    c.alpha = alpha;
    c.beta = beta;
    const auto parsed = parse_strategy(strategy);
    if (!parsed) throw InputError("unknown strategy '" + strategy + "'");
    c.strategy = *parsed;
    c.scale_schedule = parse_scales(schedule);
    c.ca_seed_scale = c.scale_schedule.front();
    c.background = !no_background;
    c.background_alpha = background_alpha;
    c.reseed_from_ca = reseed_from_ca;
    c.ca_normalization = per_token ? CaNormalization::per_token : CaNormalization::global;
    return c;
  }
};

synth::SyntheticSpec synth_preset(const std::string& name) {
  if (name == "disk") return synth::clean_disk();
  if (name == "rectangle") return synth::clean_rectangle();
  if (name == "sparse") return synth::sparse_concentrated();
  if (name == "leak") return synth::background_leak();
  throw InputError("unknown preset '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seediff: turn diffusion attention dumps into segmentation masks"};
  app.require_subcommand(1);

  app::GenerateOptions gen;
  PipelineFlags gen_flags;
  std::string gen_dump, gen_out;
  auto* generate = app.add_subcommand("generate", "Produce a mask from one dump");
  generate->add_option("dump", gen_dump, "Dump directory")->required();
  generate->add_option("-o,--out", gen_out, "Output directory")->required();
  generate->add_flag("--trace", gen.trace, "Write intermediate stages to <out>/trace");
  generate->add_flag("--heatmap", gen.heatmap, "Write the soft mask as soft.png");
  gen_flags.attach(generate);

  app::BatchOptions batch;
  PipelineFlags batch_flags;
  std::vector<std::string> batch_dumps;
  std::string batch_list, batch_out;
  auto* batch_cmd = app.add_subcommand("batch", "Produce masks for many dumps");
  batch_cmd->add_option("dumps", batch_dumps, "Dump directories");
  batch_cmd->add_option("--list", batch_list, "File listing dump directories, one per line");
  batch_cmd->add_option("-o,--out", batch_out, "Output directory")->required();
  batch_cmd->add_option("-j,--jobs", batch.jobs, "Worker threads")->capture_default_str();
  batch_cmd->add_flag("--strict", batch.strict, "Exit non-zero if any dump fails");
  batch_flags.attach(batch_cmd);

  app::EvalOptions ev;
  std::string ev_pred, ev_gt, ev_map, ev_report;
  bool per_image = false;
  auto* eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
  eval->add_option("pred_dir", ev_pred, "Predicted mask PNGs")->required();
  eval->add_option("gt_dir", ev_gt, "Ground-truth mask PNGs")->required();
  eval->add_option("--class-map", ev_map, "JSON object mapping relative PNG path to class");
  eval->add_option("--report", ev_report, "Report path (default <pred_dir>/eval_report.json)");
  eval->add_flag("--per-image", per_image, "Average per-image IoU instead of pooling counts");

  app::InspectOptions insp;
  std::string insp_dump, insp_out;
  std::vector<std::string> insp_at;
  bool insp_per_token = false;
  auto* inspect = app.add_subcommand("inspect", "Render attention heatmaps for a dump");
  inspect->add_option("dump", insp_dump, "Dump directory")->required();
  inspect->add_option("-o,--out", insp_out, "Output directory")->required();
  inspect->add_option("--at", insp_at, "Image point ROW,COL in 512-pixel units (repeatable)");
  inspect->add_flag("--per-token-ca", insp_per_token, "Normalize cross-attention per token");

  std::string syn_preset = "disk", syn_out, syn_mode = "aggregated", syn_scales;
  std::optional<std::uint64_t> syn_seed;
  int syn_layers = 1, syn_timesteps = 1;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dump with known truth");
  synth_cmd->add_option("-o,--out", syn_out, "Output dump directory")->required();
  synth_cmd->add_option("--preset", syn_preset, "disk | rectangle | sparse | leak")
      ->capture_default_str();
  synth_cmd->add_option("--seed", syn_seed, "Random seed");
  synth_cmd->add_option("--mode", syn_mode, "aggregated | full")->capture_default_str();
  synth_cmd->add_option("--scales", syn_scales, "Comma-separated scales to emit");
  synth_cmd->add_option("--layers", syn_layers, "Layers per scale (full mode)")
      ->capture_default_str();
  synth_cmd->add_option("--timesteps", syn_timesteps, "Timesteps (full mode)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? app::kOk : app::kUsage;
  }

  try {
    if (*generate) {
      gen.dump_dir = gen_dump;
      gen.out_dir = gen_out;
      gen.config = gen_flags.build();
      return app::cmd_generate(gen);
    }
    if (*batch_cmd) {
      for (const auto& d : batch_dumps) batch.dumps.emplace_back(d);
      if (!batch_list.empty()) {
        try {
          for (auto& d : app::read_dump_list(batch_list)) batch.dumps.push_back(std::move(d));
        } catch (const Error& e) {
          std::cerr << e.what() << "\n";
          return app::kInput;
        }
      }
      if (batch.dumps.empty()) throw InputError("no dump directories given");
      batch.out_dir = batch_out;
      batch.config = batch_flags.build();
      return app::cmd_batch(batch);
    }
    if (*eval) {
      ev.pred_dir = ev_pred;
      ev.gt_dir = ev_gt;
      if (!ev_map.empty()) ev.class_map = ev_map;
      if (!ev_report.empty()) ev.report = ev_report;
      ev.mode = per_image ? MiouMode::per_image : MiouMode::pooled;
      return app::cmd_eval(ev);
    }
    if (*inspect) {
      insp.dump_dir = insp_dump;
      insp.out_dir = insp_out;
      for (const auto& p : insp_at) insp.at.push_back(parse_point(p));
      insp.ca_normalization =
          insp_per_token ? CaNormalization::per_token : CaNormalization::global;
      return app::cmd_inspect(insp);
    }
    if (*synth_cmd) {
      app::SynthOptions so;
      so.spec = synth_preset(syn_preset);
      so.out_dir = syn_out;
      if (syn_seed) so.spec.seed = *syn_seed;
      if (syn_mode == "full") {
        so.spec.mode = DumpMode::full;
      } else if (syn_mode != "aggregated") {
        throw InputError("unknown mode '" + syn_mode + "'");
      }
      if (!syn_scales.empty()) so.spec.scales = parse_scales(syn_scales);
      so.spec.layers = syn_layers;
      so.spec.timesteps = syn_timesteps;
      return app::cmd_synth(so);
    }
  } catch (const std::invalid_argument&) {
    std::cerr << "usage error: malformed number\n";
    return app::kUsage;
  } catch (const std::out_of_range&) {
    std::cerr << "usage error: number out of range\n";
    return app::kUsage;
  } catch (const Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return app::kUsage;
  }
  return app::kUsage;
}
