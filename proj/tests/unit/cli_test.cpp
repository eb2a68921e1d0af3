#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>

#include "fe/app/cli.hpp"
#include "fe/evaluate.hpp"
#include "fe/external.hpp"
#include "fe/metrics.hpp"
#include "fe/png_io.hpp"
#include "fe/scene.hpp"
#include "synth.hpp"

namespace fe::app {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "fe");
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  const int code = cli_main(args);
  std::string out = ::testing::internal::GetCapturedStdout();
  std::string err = ::testing::internal::GetCapturedStderr();
  return {code, out, err};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir = new testing::TempDir("fe-cli");
    const auto rendered = testing::render(testing::synthetic_room());
    save_scene(rendered.bundle, scene());
    write_png(dir->path() / "empty.png", rendered.empty_room);
    std::ofstream(config()) << R"({"backend": {"kind": "diffusion"}, "target_long_side": 128})";
  }
  static void TearDownTestSuite() {
    delete dir;
    dir = nullptr;
  }

  static fs::path scene() { return dir->path() / "scene"; }
  static fs::path config() { return dir->path() / "config.json"; }
  static fs::path path(const std::string& name) { return dir->path() / name; }

  static inline testing::TempDir* dir = nullptr;
};

TEST_F(CliTest, EraseWritesImageAndTimings) {
  const auto r = run({"erase", "--scene", scene().string(), "--select", "chair1", "--config", config().string(),
                      "--out", path("out.png").string(), "--timings", path("timings.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const RgbImage out = read_rgb_png(path("out.png"));
  EXPECT_EQ(out.size(), (Size{192, 144}));
  const json t = json::parse(std::ifstream(path("timings.json")));
  EXPECT_TRUE(t.contains("total_ms"));
}

TEST_F(CliTest, EraseRejectsUnknownInstance) {
  const auto r = run({"erase", "--scene", scene().string(), "--select", "sofa99", "--config", config().string(),
                      "--out", path("bad.png").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("sofa99"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("bad.png")));
}

TEST_F(CliTest, UnknownFlagPrintsUsage) {
  const auto r = run({"erase", "--scene", scene().string(), "--out", "x.png", "--frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--frobnicate"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("--select"), std::string::npos) << r.err;
}

TEST_F(CliTest, MetricsOnIdenticalImages) {
  write_png(path("mask.png"), testing::furniture_silhouettes()[0]);
  const BinaryMask small = testing::furniture_silhouettes()[0];
  RgbImage img(small.width(), small.height(), {128, 128, 128});
  write_png(path("flat.png"), img);
  const auto r = run({"metrics", "--gt", path("flat.png").string(), "--pred", path("flat.png").string(), "--mask",
                      path("mask.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("incoherence 0.0\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("psnr inf\n"), std::string::npos) << r.out;
}

TEST_F(CliTest, MetricsMatchesLibrary) {
  const auto gt = read_rgb_png(path("empty.png"));
  const auto pred = read_rgb_png(scene() / "image.png");
  BinaryMask m(gt.size());
  for (int y = 40; y < 100; ++y)
    for (int x = 60; x < 150; ++x) m.set(x, y);
  write_png(path("region.png"), m);
  const auto r = run({"metrics", "--gt", path("empty.png").string(), "--pred", (scene() / "image.png").string(),
                      "--mask", path("region.png").string(), "--region", "mask"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string key;
  double inc = 0.0;
  double ps = 0.0;
  in >> key >> inc >> key >> ps;
  EXPECT_NEAR(inc, incoherence(gt, pred, m), 1e-9);
  EXPECT_NEAR(ps, psnr(gt, pred, &m), 1e-8);
}

TEST_F(CliTest, RectifyWritesFrame) {
  const auto r = run({"rectify", "--scene", scene().string(), "--plane", "floor", "--out", path("floor.png").string(),
                      "--mask-out", path("floor_mask.png").string(), "--target-long-side", "256"});
  ASSERT_EQ(r.code, 0) << r.err;
  const RgbImage img = read_rgb_png(path("floor.png"));
  EXPECT_EQ(std::max(img.width(), img.height()), 256);
  EXPECT_EQ(read_mask_png(path("floor_mask.png")).size(), img.size());
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("plane_id"), "floor");
}

TEST_F(CliTest, RectifyUnknownPlaneFails) {
  const auto r = run({"rectify", "--scene", scene().string(), "--plane", "ceiling", "--out", path("c.png").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ceiling"), std::string::npos) << r.err;
}

TEST_F(CliTest, InpaintFillsOnlyTheMask) {
  const auto img = testing::random_image({40, 30}, 2);
  const auto mask = testing::random_blob_mask({40, 30}, 2);
  write_png(path("in.png"), img);
  write_png(path("in_mask.png"), mask);
  const auto r = run({"inpaint", "--input", path("in.png").string(), "--mask", path("in_mask.png").string(),
                      "--output", path("filled.png").string(), "--backend", "patchmatch", "--seed", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const RgbImage out = read_rgb_png(path("filled.png"));
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x)
      if (!mask.test(x, y))
        for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(x, y, c), img.at(x, y, c));
}

TEST_F(CliTest, EvaluateWritesReport) {
  const fs::path data = path("dataset");
  fs::create_directories(data / "room" / "masks");
  write_png(data / "room" / "image.png", read_rgb_png(path("empty.png")));
  SilhouetteMaskParams p;
  p.silhouettes = testing::furniture_silhouettes();
  p.count = 1;
  write_png(data / "room" / "masks" / "m0.png", synthesize_test_masks({192, 144}, p, 1)[0]);
  std::ofstream(path("methods.json"))
      << R"([{"label": "gt", "mode": "identity"}, {"label": "diff", "backend": {"kind": "diffusion"}}])";
  const auto r = run({"evaluate", "--dataset", data.string(), "--methods", path("methods.json").string(), "--report",
                      path("report").string(), "--psnr-region", "mask"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("report") / "report.csv"));
  EXPECT_TRUE(fs::exists(path("report") / "report.json"));
  EXPECT_NE(r.out.find("diff"), std::string::npos) << r.out;
}

TEST(CliBinary, ExitCodesFromTheRealExecutable) {
  auto r = run_process({FE_CLI_PATH, "--help"}, std::chrono::seconds(30));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("erase"), std::string::npos);
  r = run_process({FE_CLI_PATH, "metrics", "--gt", "/nonexistent.png", "--pred", "/nonexistent.png", "--mask",
                   "/nonexistent.png"},
                  std::chrono::seconds(30));
  EXPECT_EQ(r.exit_code, 1) << r.err;
  r = run_process({FE_CLI_PATH, "nosuchcommand"}, std::chrono::seconds(30));
  EXPECT_EQ(r.exit_code, 1);
}

}  // namespace
}  // namespace fe::app
