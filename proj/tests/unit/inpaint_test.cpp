#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "fe/errors.hpp"
#include "fe/external.hpp"
#include "fe/inpaint.hpp"
#include "fe/metrics.hpp"
#include "fe/patchmatch.hpp"
#include "fe/png_io.hpp"
#include "synth.hpp"

#include <httplib.h>

namespace fe {
namespace {

class CountingBackend final : public InpaintBackend {
 public:
  std::string name() const override { return "counting"; }
  RgbImage fill(const InpaintRequest& request) const override {
    ++calls;
    // Scribbles over everything; the contract wrapper must undo it outside the mask.
    return RgbImage(request.image.size(), {1, 2, 3});
  }
  mutable std::atomic<int> calls{0};
};

class ThrowingBackend final : public InpaintBackend {
 public:
  std::string name() const override { return "throwing"; }
  RgbImage fill(const InpaintRequest&) const override { throw std::runtime_error("model crashed"); }
};

BinaryMask box(Size s, int x0, int y0, int w, int h) {
  BinaryMask m(s);
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) m.set(x, y);
  return m;
}

bool unmasked_identical(const RgbImage& a, const RgbImage& b, const BinaryMask& mask) {
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      if (!mask.test(x, y) && a.rgb(x, y) != b.rgb(x, y)) return false;
  return true;
}

RgbImage horizontal_stripes(Size s, int period) {
  RgbImage img(s);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      img.set(x, y, (y % period) < period / 2 ? Rgb{200, 60, 40} : Rgb{30, 90, 180});
  return img;
}

TEST(InpaintContract, ValidatesRequest) {
  InpaintRequest r{RgbImage(8, 8), BinaryMask(8, 7)};
  EXPECT_THROW(validate_request(r), ValidationError);
  r.mask = BinaryMask(8, 8, true);
  EXPECT_THROW(validate_request(r), ValidationError);
  r.mask = BinaryMask(8, 8);
  EXPECT_NO_THROW(validate_request(r));
}

TEST(InpaintContract, EmptyMaskSkipsBackend) {
  CountingBackend backend;
  const InpaintRequest r{testing::random_image({20, 20}, 1), BinaryMask(20, 20)};
  EXPECT_EQ(inpaint(r, backend), r.image);
  EXPECT_EQ(backend.calls, 0);
}

TEST(InpaintContract, UnmaskedPixelsAreRestored) {
  CountingBackend backend;
  const InpaintRequest r{testing::random_image({20, 20}, 2), box({20, 20}, 5, 5, 4, 4)};
  const RgbImage out = inpaint(r, backend);
  EXPECT_EQ(backend.calls, 1);
  EXPECT_TRUE(unmasked_identical(out, r.image, r.mask));
  EXPECT_EQ(out.rgb(6, 6), (Rgb{1, 2, 3}));
}

TEST(InpaintContract, BackendFailuresNameTheBackend) {
  ThrowingBackend backend;
  const InpaintRequest r{testing::random_image({20, 20}, 3), box({20, 20}, 5, 5, 4, 4)};
  try {
    inpaint(r, backend);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.backend(), "throwing");
    EXPECT_NE(std::string(e.what()).find("model crashed"), std::string::npos);
  }
}

TEST(InpaintContract, RandomFixturesAllBackends) {
  const PatchMatchBackend pm(PatchMatchParams{.patch_size = 5, .em_iters = 3, .nnf_iters = 3, .seed = 4});
  const DiffusionBackend diffusion;
  for (int i = 0; i < 10; ++i) {
    const Size s{24 + i, 20 + 2 * i};
    const InpaintRequest r{testing::random_image(s, 100 + i), testing::random_blob_mask(s, 200 + i)};
    for (const InpaintBackend* b : {static_cast<const InpaintBackend*>(&pm),
                                    static_cast<const InpaintBackend*>(&diffusion)}) {
      const RgbImage a = inpaint(r, *b);
      ASSERT_TRUE(unmasked_identical(a, r.image, r.mask)) << b->name() << " fixture " << i;
      ASSERT_EQ(a, inpaint(r, *b)) << b->name() << " fixture " << i;
    }
  }
}

TEST(PatchMatchParams, Validation) {
  PatchMatchParams p;
  EXPECT_NO_THROW(p.validate());
  p.patch_size = 4;
  EXPECT_THROW(p.validate(), ValidationError);
  p = {};
  p.search_decay = 1.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = {};
  p.em_iters = 0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = {};
  EXPECT_EQ(p.effective_min_side(), 14);
  EXPECT_EQ(p.radius(), 3);
}

TEST(PatchMatch, ConstantImageStaysConstant) {
  const Size s{64, 64};
  const RgbImage img(s, {90, 140, 200});
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto mask = testing::random_blob_mask(s, seed);
    PatchMatchParams p;
    p.seed = seed;
    EXPECT_EQ(patchmatch_inpaint({img, mask}, p), img);
  }
}

TEST(PatchMatch, SameSeedIsBitIdentical) {
  const Size s{48, 40};
  const InpaintRequest r{testing::random_image(s, 7), testing::random_blob_mask(s, 7)};
  PatchMatchParams p;
  p.seed = 99;
  const RgbImage a = patchmatch_inpaint(r, p);
  EXPECT_EQ(a, patchmatch_inpaint(r, p));
  const PatchMatchBackend backend(p);
  EXPECT_EQ(inpaint(r, backend), a);
}

TEST(PatchMatch, ContinuesStripes) {
  const Size s{128, 128};
  const RgbImage truth = horizontal_stripes(s, 8);
  const BinaryMask hole = box(s, 48, 48, 32, 32);
  RgbImage input = truth;
  for (int y = 48; y < 80; ++y)
    for (int x = 48; x < 80; ++x) input.set(x, y, {0, 0, 0});
  const RgbImage out = patchmatch_inpaint({input, hole}, PatchMatchParams{});
  EXPECT_GE(psnr(truth, out, &hole), 25.0);
}

TEST(PatchMatch, ExactCopiesGiveZeroDistance) {
  const Size s{64, 48};
  const RgbImage half = testing::random_image({32, 48}, 11);
  RgbImage img(s);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 32; ++x) {
      img.set(x, y, half.rgb(x, y));
      img.set(x + 32, y, half.rgb(x, y));
    }
  const BinaryMask hole = box(s, 42, 16, 12, 12);
  PatchMatchParams p;
  p.seed = 5;
  const auto out = patchmatch_complete({img, hole}, p);
  ASSERT_GT(out.nnf.active_count(), 0u);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      const NnfEntry& e = out.nnf.at(x, y);
      if (e.active) ASSERT_LT(e.distance, 1e-6) << x << "," << y;
    }
  EXPECT_EQ(out.image, img);
}

TEST(PatchMatch, NeedsACompleteKnownPatch) {
  const Size s{12, 12};
  BinaryMask mask(s);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) mask.set(x, y, (x + y) % 5 == 0);
  EXPECT_THROW(patchmatch_inpaint({testing::random_image(s, 1), mask}, PatchMatchParams{}),
               InsufficientContextError);
}

TEST(NnfSearch, ValidSourcesNeedWholeKnownPatch) {
  BinaryMask known(10, 10, true);
  known.set(5, 5, false);
  const auto v = valid_sources(known, 3);
  EXPECT_EQ(v.count(), 8u * 8u - 9u);
  EXPECT_FALSE(v.test(0, 0));
  EXPECT_FALSE(v.test(4, 4));
  EXPECT_TRUE(v.test(7, 7));
}

TEST(NnfSearch, CloseToBruteForce) {
  for (int i = 0; i < 20; ++i) {
    const auto inst = testing::nnf_instance(i, 7);
    PatchMatchParams p;
    p.seed = i;
    NnfTrace trace;
    const NNField approx = nnf_search(inst.image, inst.known, inst.targets, p, nullptr, &trace);
    const NNField exact = nnf_brute_force(inst.image, inst.known, inst.targets, 7);
    ASSERT_GT(exact.active_count(), 0u);
    ASSERT_EQ(approx.active_count(), exact.active_count());
    EXPECT_LE(approx.mean_distance(), 1.2 * exact.mean_distance() + 1e-9) << "instance " << i;
    ASSERT_EQ(trace.mean_distance.size(), static_cast<std::size_t>(p.nnf_iters));
    for (std::size_t k = 1; k < trace.mean_distance.size(); ++k)
      EXPECT_LE(trace.mean_distance[k], trace.mean_distance[k - 1]) << "instance " << i;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (exact.at(x, y).active) ASSERT_GE(approx.at(x, y).distance, exact.at(x, y).distance - 1e-9);
  }
}

TEST(NnfSearch, ExactInitIsUnchanged) {
  const Size s{16, 16};
  const RgbImage img = testing::random_image(s, 8);
  const BinaryMask targets = testing::random_blob_mask(s, 8, 5);
  const BinaryMask known = mask_complement(targets);
  const NNField exact = nnf_brute_force(img, known, targets, 5);
  PatchMatchParams p;
  p.patch_size = 5;
  const NNField again = nnf_search(img, known, targets, p, &exact);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      if (!exact.at(x, y).active) continue;
      EXPECT_DOUBLE_EQ(again.at(x, y).distance, exact.at(x, y).distance);
    }
  EXPECT_DOUBLE_EQ(again.mean_distance(), exact.mean_distance());
}

TEST(NnfSearch, ZeroDistanceInitKeepsOffsets) {
  // Targets lie in the right half of a mirrored image, so offset (-8, 0) is exact.
  const Size s{16, 8};
  RgbImage img(s);
  const RgbImage half = testing::random_image({8, 8}, 12);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      img.set(x, y, half.rgb(x, y));
      img.set(x + 8, y, half.rgb(x, y));
    }
  const BinaryMask targets = box(s, 11, 3, 2, 2);
  const BinaryMask known(s, true);
  NNField init(s);
  for (int y = 3; y < 5; ++y)
    for (int x = 11; x < 13; ++x) init.at(x, y) = {-8, 0, 0.0, true};
  PatchMatchParams p;
  p.patch_size = 3;
  const NNField out = nnf_search(img, known, targets, p, &init);
  for (int y = 3; y < 5; ++y)
    for (int x = 11; x < 13; ++x) {
      EXPECT_EQ(out.at(x, y).dx, -8);
      EXPECT_EQ(out.at(x, y).dy, 0);
      EXPECT_EQ(out.at(x, y).distance, 0.0);
    }
}

TEST(Diffusion, UniformBoundaryFillsExactly) {
  RgbImage img(20, 20, {70, 80, 90});
  const BinaryMask hole = box({20, 20}, 4, 6, 9, 7);
  for (int y = 6; y < 13; ++y)
    for (int x = 4; x < 13; ++x) img.set(x, y, {255, 0, 255});
  EXPECT_EQ(diffusion_fill({img, hole}), RgbImage(20, 20, {70, 80, 90}));
}

TEST(Diffusion, SinglePixelAveragesNeighbours) {
  RgbImage img(3, 3, {0, 0, 0});
  img.set(1, 0, {10, 0, 0});
  img.set(0, 1, {20, 0, 0});
  img.set(2, 1, {30, 0, 0});
  img.set(1, 2, {40, 0, 0});
  BinaryMask hole(3, 3);
  hole.set(1, 1);
  EXPECT_EQ(diffusion_fill({img, hole}).at(1, 1, 0), 25);
}

TEST(Diffusion, ReproducesLinearGradient) {
  const Size s{64, 32};
  RgbImage truth(s);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const auto v = static_cast<std::uint8_t>(3 * x + 20);
      truth.set(x, y, {v, v, static_cast<std::uint8_t>(200 - 2 * x)});
    }
  const BinaryMask hole = box(s, 16, 8, 30, 16);
  RgbImage input = truth;
  for (int y = 8; y < 24; ++y)
    for (int x = 16; x < 46; ++x) input.set(x, y, {0, 0, 0});
  const RgbImage out = diffusion_fill({input, hole});
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_NEAR(out.at(x, y, c), truth.at(x, y, c), 2) << x << "," << y;
}

class ExternalBackendTest : public ::testing::Test {
 protected:
  testing::TempDir dir{"external"};
  InpaintRequest request{testing::random_image({30, 20}, 21), box({30, 20}, 8, 5, 10, 8)};
};

TEST_F(ExternalBackendTest, CopyCommandReturnsInput) {
  const auto adapter = AdapterConfig::from_json({{"kind", "command"}, {"command", {"cp", "{input}", "{output}"}}});
  EXPECT_EQ(external_inpaint(request, adapter), request.image);
  const ExternalBackend backend(adapter);
  EXPECT_EQ(inpaint(request, backend), request.image);
}

TEST_F(ExternalBackendTest, WrongSizeNamesBothSizes) {
  const auto small = dir.path() / "small.png";
  write_png(small, RgbImage(10, 10));
  const auto adapter =
      AdapterConfig::from_json({{"kind", "command"}, {"command", {"cp", small.string(), "{output}"}}});
  try {
    external_inpaint(request, adapter);
    FAIL();
  } catch (const BackendError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("30x20"), std::string::npos) << msg;
    EXPECT_NE(msg.find("10x10"), std::string::npos) << msg;
  }
}

TEST_F(ExternalBackendTest, ForcesUnmaskedPixelsBack) {
  // The adapter returns noise everywhere; only the masked pixels may survive.
  const auto noise = dir.path() / "noise.png";
  write_png(noise, testing::random_image({30, 20}, 22));
  const auto adapter =
      AdapterConfig::from_json({{"kind", "command"}, {"command", {"cp", noise.string(), "{output}"}}});
  const RgbImage out = external_inpaint(request, adapter);
  EXPECT_TRUE(unmasked_identical(out, request.image, request.mask));
  EXPECT_NE(out, request.image);
}

TEST_F(ExternalBackendTest, SelfHostedDiffusionMatchesInProcess) {
  const auto adapter = AdapterConfig::from_json(
      {{"kind", "command"},
       {"command",
        {FE_CLI_PATH, "inpaint", "--input", "{input}", "--mask", "{mask}", "--output", "{output}", "--backend",
         "diffusion"}}});
  EXPECT_EQ(external_inpaint(request, adapter), inpaint(request, DiffusionBackend{}));
}

TEST_F(ExternalBackendTest, FailuresBecomeBackendErrors) {
  auto adapter = AdapterConfig::from_json({{"kind", "command"}, {"command", {"sh", "-c", "echo boom >&2; exit 3"}}});
  try {
    external_inpaint(request, adapter);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos) << e.what();
  }
  adapter = AdapterConfig::from_json({{"kind", "command"}, {"command", {"true"}}});
  EXPECT_THROW(external_inpaint(request, adapter), BackendError);
  adapter = AdapterConfig::from_json({{"kind", "command"}, {"command", {"sleep", "5"}}, {"timeout_s", 0.2}});
  try {
    external_inpaint(request, adapter);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos) << e.what();
  }
}

TEST_F(ExternalBackendTest, HttpAdapterRoundTrip) {
  httplib::Server server;
  server.Post("/fill", [](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_file("input") || !req.has_file("mask")) {
      res.status = 400;
      return;
    }
    res.set_content(req.get_file_value("input").content, "image/png");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const auto adapter = AdapterConfig::from_json(
      {{"kind", "http"}, {"url", "http://127.0.0.1:" + std::to_string(port) + "/fill"}, {"timeout_s", 10}});
  const RgbImage out = external_inpaint(request, adapter);
  server.stop();
  t.join();
  EXPECT_EQ(out, request.image);
}

TEST(AdapterConfig, RejectsMalformed) {
  using nlohmann::json;
  EXPECT_THROW(AdapterConfig::from_json(json::array()), ValidationError);
  EXPECT_THROW(AdapterConfig::from_json({{"kind", "command"}}), ValidationError);
  EXPECT_THROW(AdapterConfig::from_json({{"kind", "command"}, {"command", {1, 2}}}), ValidationError);
  EXPECT_THROW(AdapterConfig::from_json({{"kind", "http"}, {"url", "ftp://x"}}), ValidationError);
  EXPECT_THROW(AdapterConfig::from_json({{"kind", "grpc"}}), ValidationError);
  EXPECT_THROW(AdapterConfig::from_json({{"kind", "command"}, {"command", {"x"}}, {"timeout_s", 0}}),
               ValidationError);
  const auto a = AdapterConfig::from_json({{"kind", "command"}, {"command", {"a", "{input}"}}, {"timeout_s", 3}});
  const auto b = AdapterConfig::from_json(a.to_json());
  EXPECT_EQ(b.command, a.command);
  EXPECT_DOUBLE_EQ(b.timeout_s, 3.0);
}

std::array<double, 256> channel_histogram(const RgbImage& img, const BinaryMask& m, int c) {
  std::array<double, 256> h{};
  const double n = static_cast<double>(m.count());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (m.test(x, y)) h[img.at(x, y, c)] += 1.0 / n;
  return h;
}

double earth_movers(const std::array<double, 256>& a, const std::array<double, 256>& b) {
  double ca = 0, cb = 0, emd = 0;
  for (int i = 0; i < 256; ++i) {
    ca += a[i];
    cb += b[i];
    emd += std::abs(ca - cb);
  }
  return emd;
}

TEST(HistogramMatch, SameDistributionBarelyMoves) {
  const Size s{40, 40};
  const RgbImage img = testing::random_image(s, 31);
  BinaryMask target(s), reference(s);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) (x < 20 ? target : reference).set(x, y);
  // Mirror so both halves hold exactly the same values.
  RgbImage mirrored = img;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 20; ++x) mirrored.set(x, y, img.rgb(39 - x, y));
  const RgbImage out = histogram_match(mirrored, target, reference);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_NEAR(out.at(x, y, c), mirrored.at(x, y, c), 1);
}

TEST(HistogramMatch, GrayTargetTakesBinaryReference) {
  const Size s{32, 32};
  RgbImage img(s, {128, 128, 128});
  BinaryMask target(s), reference(s);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (x < 16) {
        target.set(x, y);
      } else {
        reference.set(x, y);
        img.set(x, y, (x + y) % 2 ? Rgb{255, 255, 255} : Rgb{0, 0, 0});
      }
    }
  const RgbImage out = histogram_match(img, target, reference);
  for (int c = 0; c < 3; ++c)
    EXPECT_LE(earth_movers(channel_histogram(out, target, c), channel_histogram(img, reference, c)), 2.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 16; ++x) {
      const auto v = out.at(x, y, 0);
      ASSERT_TRUE(v == 0 || v == 255) << int(v);
    }
  EXPECT_TRUE(unmasked_identical(out, img, target));
}

TEST(HistogramMatch, EmptyTargetAndReference) {
  const Size s{8, 8};
  const RgbImage img = testing::random_image(s, 1);
  EXPECT_EQ(histogram_match(img, BinaryMask(s), BinaryMask(s, true)), img);
  EXPECT_THROW(histogram_match(img, BinaryMask(s, true), BinaryMask(s)), ValidationError);
}

}  // namespace
}  // namespace fe
