#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "seediff/app.hpp"
#include "support.hpp"

namespace seediff {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) { return read_bytes(p); }

fs::path make_dump(const fs::path& dir, std::uint64_t seed = 1, std::vector<int> sides = {16, 32, 64}) {
  auto c = test::small_case(sides, seed);
  save_dump(c.dump, dir);
  png::write_mask(dir / "truth.png", kFullResolution, c.truth);
  return dir;
}

TEST(Png, MaskRoundTrip) {
  test::TempDir dir;
  std::vector<std::uint8_t> m(16 * 16, 0);
  for (std::size_t i = 0; i < m.size(); i += 3) m[i] = 1;
  png::write_mask(dir / "m.png", 16, m);
  int side = 0;
  EXPECT_EQ(png::read_mask(dir / "m.png", &side), m);
  EXPECT_EQ(side, 16);
  EXPECT_EQ(png::read_gray(dir / "m.png").pixels[0], 255);
}

TEST(Png, HeatmapAndErrors) {
  test::TempDir dir;
  png::write_heatmap(dir / "h.png", SoftMask(2, 3, {0, 0.25f, 0.5f, 0.75f, 1, 0.1f}), 4);
  const auto img = png::read_gray(dir / "h.png");
  EXPECT_EQ(img.width, 12);
  EXPECT_EQ(img.height, 8);
  EXPECT_THROW(png::read_gray(dir / "missing.png"), IoError);
  std::ofstream(dir / "bad.png") << "nope";
  EXPECT_THROW(png::read_gray(dir / "bad.png"), IoError);
  png::write_gray(dir / "rect.png", 4, 2, std::vector<std::uint8_t>(8, 9));
  EXPECT_THROW(png::read_mask(dir / "rect.png"), InputError);
  EXPECT_EQ(png::heat_color(0.0), (std::array<std::uint8_t, 3>{0, 0, 4}));
  EXPECT_EQ(png::heat_color(1.0), (std::array<std::uint8_t, 3>{252, 255, 164}));
}

class Commands : public ::testing::Test {
 protected:
  test::TempDir dir;
  std::ostringstream out, err;
};

TEST_F(Commands, GenerateDefaults) {
  app::GenerateOptions o;
  o.dump_dir = make_dump(dir / "d");
  o.out_dir = dir / "o";
  o.trace = true;
  o.heatmap = true;
  ASSERT_EQ(app::cmd_generate(o, err), app::kOk) << err.str();
  for (const char* f : {"mask.png", "soft.atnb", "soft.png", "trace/index.json"}) {
    EXPECT_TRUE(fs::exists(o.out_dir / f)) << f;
  }
  EXPECT_EQ(read_tensor(o.out_dir / "soft.atnb").shape(), (Shape{512, 512}));
  const auto idx = read_json(o.out_dir / "trace/index.json");
  EXPECT_GE(idx["stages"].size(), 10u);
}

TEST_F(Commands, GenerateUsageInputOutputErrors) {
  app::GenerateOptions o;
  o.dump_dir = make_dump(dir / "d");
  o.out_dir = dir / "o";
  o.config.alpha = 1.5;
  EXPECT_EQ(app::cmd_generate(o, err), app::kUsage);

  o.config = {};
  o.dump_dir = dir / "nope";
  EXPECT_EQ(app::cmd_generate(o, err), app::kInput);

  o.dump_dir = dir / "d";
  std::ofstream(dir / "blocker") << "file";
  o.out_dir = dir / "blocker" / "sub";
  EXPECT_EQ(app::cmd_generate(o, err), app::kOutput);

  o.out_dir = dir / "o";
  o.config = test::config_for({16, 32, 64});
  o.config.scale_schedule.push_back(Scale::of(8));
  EXPECT_EQ(app::cmd_generate(o, err), app::kUsage);
}

TEST_F(Commands, GenerateSeediffBeatsCaa) {
  const auto d = make_dump(dir / "d");
  const auto truth = png::read_mask(d / "truth.png");
  double scores[2];
  int i = 0;
  for (auto s : {Strategy::caa, Strategy::seediff}) {
    app::GenerateOptions o;
    o.dump_dir = d;
    o.out_dir = dir / to_string(s);
    o.config.strategy = s;
    ASSERT_EQ(app::cmd_generate(o, err), app::kOk);
    scores[i++] = iou(png::read_mask(o.out_dir / "mask.png"), truth);
  }
  EXPECT_GE(scores[1], scores[0]);
}

TEST_F(Commands, BatchDeterministicAcrossJobs) {
  app::BatchOptions b;
  for (int i = 0; i < 4; ++i) {
    b.dumps.push_back(make_dump(dir / ("d" + std::to_string(i)), 10 + i, {16, 32}));
  }
  b.config = test::config_for({16, 32});
  b.out_dir = dir / "j1";
  b.jobs = 1;
  ASSERT_EQ(app::cmd_batch(b, err), app::kOk) << err.str();
  b.out_dir = dir / "j3";
  b.jobs = 3;
  ASSERT_EQ(app::cmd_batch(b, err), app::kOk);
  const auto list = read_json(dir / "j1" / "dataset.json");
  ASSERT_EQ(list.size(), 4u);
  EXPECT_EQ(file_bytes(dir / "j1" / "dataset.json"), file_bytes(dir / "j3" / "dataset.json"));
  for (const auto& e : list) {
    EXPECT_EQ(e["status"], "ok");
    EXPECT_EQ(e["class"], "disk");
    for (const char* k : {"mask", "soft"}) {
      const std::string rel = e[k];
      EXPECT_EQ(file_bytes(dir / "j1" / rel), file_bytes(dir / "j3" / rel));
    }
  }
}

TEST_F(Commands, BatchRecordsFailuresAndStrict) {
  app::BatchOptions b;
  b.dumps = {make_dump(dir / "good", 1, {16, 32}), dir / "missing"};
  b.config = test::config_for({16, 32});
  b.out_dir = dir / "out";
  EXPECT_EQ(app::cmd_batch(b, err), app::kOk);
  const auto list = read_json(dir / "out" / "dataset.json");
  EXPECT_EQ(list[0]["status"], "ok");
  EXPECT_EQ(list[1]["status"], "error");
  EXPECT_TRUE(list[1].contains("error"));
  b.strict = true;
  EXPECT_EQ(app::cmd_batch(b, err), app::kInput);
  b.jobs = 0;
  EXPECT_EQ(app::cmd_batch(b, err), app::kUsage);
}

TEST_F(Commands, DumpListFile) {
  fs::create_directories(dir / "lists");
  std::ofstream(dir / "lists" / "l.txt") << "# dumps\n../a\n\n  /abs/b  \n";
  const auto l = app::read_dump_list(dir / "lists" / "l.txt");
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[0], dir / "lists" / "../a");
  EXPECT_EQ(l[1], fs::path("/abs/b"));
  EXPECT_THROW(app::read_dump_list(dir / "none.txt"), IoError);
}

TEST_F(Commands, EvalPooledWithClassMap) {
  fs::create_directories(dir / "pred" / "x");
  fs::create_directories(dir / "gt" / "x");
  const std::vector<std::uint8_t> a = {1, 1, 0, 0}, b = {1, 0, 0, 0};
  png::write_mask(dir / "pred/x/1.png", 2, a);
  png::write_mask(dir / "gt/x/1.png", 2, b);
  png::write_mask(dir / "pred/2.png", 2, a);
  png::write_mask(dir / "gt/2.png", 2, a);
  std::ofstream(dir / "map.json") << R"({"x/1.png": "cat", "2.png": "dog"})";
  app::EvalOptions o;
  o.pred_dir = dir / "pred";
  o.gt_dir = dir / "gt";
  o.class_map = dir / "map.json";
  o.report = dir / "report.json";
  ASSERT_EQ(app::cmd_eval(o, out, err), app::kOk) << err.str();
  const auto r = read_json(dir / "report.json");
  EXPECT_EQ(r["classes"]["cat"]["iou"], 0.5);
  EXPECT_EQ(r["classes"]["dog"]["iou"], 1.0);
  EXPECT_EQ(r["miou"], 0.75);
  EXPECT_NE(out.str().find("mIoU: 0.75"), std::string::npos);
}

TEST_F(Commands, EvalInputErrors) {
  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");
  app::EvalOptions o;
  o.pred_dir = dir / "pred";
  o.gt_dir = dir / "gt";
  EXPECT_EQ(app::cmd_eval(o, out, err), app::kInput);  // no ground truth
  png::write_mask(dir / "gt/1.png", 2, std::vector<std::uint8_t>(4, 1));
  EXPECT_EQ(app::cmd_eval(o, out, err), app::kInput);  // missing prediction
  png::write_mask(dir / "pred/1.png", 4, std::vector<std::uint8_t>(16, 1));
  EXPECT_EQ(app::cmd_eval(o, out, err), app::kInput);  // size mismatch
  png::write_mask(dir / "pred/1.png", 2, std::vector<std::uint8_t>(4, 1));
  std::ofstream(dir / "map.json") << R"({"other.png": "cat"})";
  o.class_map = dir / "map.json";
  EXPECT_EQ(app::cmd_eval(o, out, err), app::kInput);  // unmapped file
  o.class_map.reset();
  EXPECT_EQ(app::cmd_eval(o, out, err), app::kOk);
  EXPECT_TRUE(fs::exists(dir / "pred" / "eval_report.json"));
}

TEST_F(Commands, InspectWritesHeatmaps) {
  app::InspectOptions o;
  o.dump_dir = make_dump(dir / "d", 1, {16, 32});
  o.out_dir = dir / "i";
  o.at = {{256, 256}, {0, 511}};
  ASSERT_EQ(app::cmd_inspect(o, err), app::kOk) << err.str();
  for (const char* f : {"ca_16.png", "ca_32.png", "sa_16_256_256.png", "sa_32_0_511.png", "inspect.json"}) {
    EXPECT_TRUE(fs::exists(o.out_dir / f)) << f;
  }
  EXPECT_EQ(png::read_gray(o.out_dir / "ca_16.png").width, 512);
  const auto j = read_json(o.out_dir / "inspect.json");
  EXPECT_EQ(j["files"].size(), 6u);
  o.at = {{512, 0}};
  EXPECT_EQ(app::cmd_inspect(o, err), app::kUsage);
  o.at = {};
  o.dump_dir = dir / "none";
  EXPECT_EQ(app::cmd_inspect(o, err), app::kInput);
}

TEST_F(Commands, SynthWritesLoadableDump) {
  app::SynthOptions o;
  o.spec = synth::clean_rectangle();
  o.spec.scales = {Scale::of(16), Scale::of(32)};
  o.out_dir = dir / "s";
  ASSERT_EQ(app::cmd_synth(o, err), app::kOk);
  EXPECT_EQ(load_dump(o.out_dir).aggregates.size(), 2u);
  EXPECT_EQ(png::read_mask(o.out_dir / "truth.png").size(), 512u * 512u);
  o.spec.hot_pixels = 0;
  EXPECT_EQ(app::cmd_synth(o, err), app::kUsage);
}

}  // namespace
}  // namespace seediff
