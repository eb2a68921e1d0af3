#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fe/errors.hpp"
#include "fe/geometry.hpp"
#include "fe/metrics.hpp"
#include "synth.hpp"

namespace fe {
namespace {

#include "geometry_oracle.inc"

CameraIntrinsics square_camera() {
  CameraIntrinsics k;
  k.fx = k.fy = 100.0;
  k.cx = k.cy = 32.0;
  k.width = k.height = 64;
  return k;
}

Plane full_plane(const std::string& id, Eigen::Vector3d n, double d, Size s) {
  Plane p;
  p.id = id;
  p.normal = n.normalized();
  p.offset = d;
  p.support_mask = BinaryMask(s, true);
  return p;
}

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Vector3d v;
  do v = Eigen::Vector3d(g(rng), g(rng), g(rng));
  while (v.norm() < 1e-6);
  return v.normalized();
}

RgbImage gradient_image(Size s) {
  RgbImage img(s);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      img.set(x, y, {static_cast<std::uint8_t>(40 + x), static_cast<std::uint8_t>(30 + y),
                     static_cast<std::uint8_t>(20 + (x + y) / 2)});
  return img;
}

TEST(RectifyingRotation, MatchesOracle) {
  for (const auto& c : kRotationCases) {
    const Eigen::Vector3d n(c.n[0], c.n[1], c.n[2]);
    const Eigen::Matrix3d r = rectifying_rotation(n);
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(r(i / 3, i % 3), c.r[i], 1e-12) << "normal " << n.transpose();
  }
}

TEST(RectifyingRotation, FrontoParallelIsIdentity) {
  EXPECT_TRUE(rectifying_rotation(Eigen::Vector3d::UnitZ()).isApprox(Eigen::Matrix3d::Identity(), 1e-15));
}

TEST(RectifyingRotation, XAxisTurnsAboutY) {
  const Eigen::Matrix3d r = rectifying_rotation(Eigen::Vector3d::UnitX());
  EXPECT_LT((r * Eigen::Vector3d::UnitX() - Eigen::Vector3d::UnitZ()).norm(), 1e-12);
  EXPECT_LT((r * Eigen::Vector3d::UnitY() - Eigen::Vector3d::UnitY()).norm(), 1e-12);
  const Eigen::AngleAxisd aa(r);
  EXPECT_NEAR(aa.angle(), M_PI / 2, 1e-12);
  EXPECT_NEAR(std::abs(aa.axis().y()), 1.0, 1e-12);
}

TEST(RectifyingRotation, AntiparallelFallsBackToHalfTurnAboutX) {
  const Eigen::Matrix3d r = rectifying_rotation(-Eigen::Vector3d::UnitZ());
  Eigen::Matrix3d expected = Eigen::Matrix3d::Zero();
  expected.diagonal() << 1.0, -1.0, -1.0;
  EXPECT_LT((r - expected).norm(), 1e-12);
}

TEST(RectifyingRotation, OrthonormalForRandomNormals) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector3d n = random_unit(rng);
    const Eigen::Matrix3d r = rectifying_rotation(n);
    ASSERT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).norm(), 1e-9);
    ASSERT_NEAR(r.determinant(), 1.0, 1e-9);
    ASSERT_LT((r * n - Eigen::Vector3d::UnitZ()).norm(), 1e-9);
  }
}

TEST(Homography, NormalizesAndRejectsSingular) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity() * 4.0;
  EXPECT_DOUBLE_EQ(Homography(m)(2, 2), 1.0);
  EXPECT_THROW(Homography(Eigen::Matrix3d::Zero()), Error);
  const Homography t = Homography::translation(3, -2);
  const Eigen::Vector2d p = (t * t.inverse()).apply(7, 9);
  EXPECT_NEAR(p.x(), 7, 1e-12);
  EXPECT_NEAR(p.y(), 9, 1e-12);
}

TEST(ComputeRectification, FrontoParallelIsScaleAndTranslation) {
  const auto k = square_camera();
  const Plane p = full_plane("wall", {0, 0, 1}, 2.0, k.size());
  const RectifiedFrame f = compute_rectification(p, k, 512);
  const Eigen::Matrix3d& h = f.orig_to_rect.matrix();
  EXPECT_NEAR(h(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(h(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(h(2, 0), 0.0, 1e-12);
  EXPECT_NEAR(h(2, 1), 0.0, 1e-12);
  EXPECT_NEAR(h(0, 0), 8.0, 1e-9);
  EXPECT_NEAR(h(1, 1), 8.0, 1e-9);
  EXPECT_EQ(f.rect_width, 512);
  EXPECT_EQ(f.rect_height, 512);
  EXPECT_NEAR(f.virtual_focal, 800.0, 1e-9);
  EXPECT_NEAR(f.pixels_per_meter, 400.0, 1e-9);

  // Bilinear upsampling reproduces a linear ramp exactly; source pixel x
  // lands at 8x + 3.5 because the frame starts at the footprint edge.
  const auto src = gradient_image(k.size());
  const auto w = warp_image(src, f.orig_to_rect, f.rect_size());
  EXPECT_TRUE(w.valid.all());
  for (int y = 0; y < 512; y += 13)
    for (int x = 0; x < 512; x += 11) {
      const double sx = std::clamp((x - 3.5) / 8.0, 0.0, 63.0);
      const double sy = std::clamp((y - 3.5) / 8.0, 0.0, 63.0);
      ASSERT_NEAR(w.image.at(x, y, 0), 40 + sx, 0.5 + 1e-9);
      ASSERT_NEAR(w.image.at(x, y, 1), 30 + sy, 0.5 + 1e-9);
    }
  EXPECT_TRUE(unknown_mask(f, k).none());
}

TEST(ComputeRectification, SupportSpansTargetLongSide) {
  const auto k = testing::camera(120, 90, 110.0);
  Plane p = full_plane("floor", {0.1, 0.9, 0.4}, 1.3, k.size());
  p.support_mask = BinaryMask(k.size());
  for (int y = 50; y < 90; ++y)
    for (int x = 10; x < 110; ++x) p.support_mask.set(x, y);
  const RectifiedFrame f = compute_rectification(p, k, 300);
  EXPECT_EQ(std::max(f.rect_width, f.rect_height), 300);
  const BinaryMask warped = warp_mask(p.support_mask, f.orig_to_rect, f.rect_size());
  int xmin = f.rect_width, xmax = -1, ymin = f.rect_height, ymax = -1;
  for (int y = 0; y < f.rect_height; ++y)
    for (int x = 0; x < f.rect_width; ++x)
      if (warped.test(x, y)) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
  EXPECT_LE(xmin, 2);
  EXPECT_LE(ymin, 2);
  EXPECT_GE(xmax, f.rect_width - 3);
  EXPECT_GE(ymax, f.rect_height - 3);
}

TEST(ComputeRectification, RoundTripIsIdentity) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const int w = 32 + static_cast<int>(u(rng) * 64);
    const int h = 32 + static_cast<int>(u(rng) * 64);
    CameraIntrinsics k = testing::camera(w, h, 40.0 + 160.0 * u(rng));
    Eigen::Vector3d n = random_unit(rng);
    // Keep the plane in front of every pixel ray with margin.
    if (n.z() < 0) n = -n;
    n.z() += 1.5;
    Plane p = full_plane("p", n, 0.5 + 3 * u(rng), k.size());
    RectifiedFrame f;
    try {
      f = compute_rectification(p, k, 64 + static_cast<int>(u(rng) * 448));
    } catch (const Error&) {
      continue;
    }
    const Eigen::Matrix3d id = (f.orig_to_rect * f.orig_to_rect.inverse()).matrix();
    EXPECT_LT((id - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 250);
}

TEST(ComputeRectification, OffsetOnlyChangesScale) {
  const auto k = testing::camera(80, 60, 90.0);
  const Eigen::Vector3d n(0.0, 0.7, 0.5);
  const Plane near = full_plane("near", n, 1.0, k.size());
  const Plane far = full_plane("far", n, 2.5, k.size());
  const auto a = compute_rectification(near, k, 256);
  const auto b = compute_rectification(far, k, 256);
  EXPECT_LT((a.orig_to_rect.matrix() - b.orig_to_rect.matrix()).norm(), 1e-12);
  EXPECT_NEAR(a.pixels_per_meter / b.pixels_per_meter, 2.5 / 1.0, 1e-12);
}

TEST(ComputeRectification, RejectsBadInputs) {
  const auto k = square_camera();
  Plane p = full_plane("p", {0, 0, 1}, 1.0, k.size());
  EXPECT_THROW(compute_rectification(p, k, 16), ValidationError);
  p.support_mask = BinaryMask(k.size());
  EXPECT_THROW(compute_rectification(p, k, 256), Error);
  p.support_mask = BinaryMask(32, 32, true);
  EXPECT_THROW(compute_rectification(p, k, 256), ValidationError);
  // A floor seen up to the horizon.
  Plane floor = full_plane("floor", {0, 1, 0}, 1.0, k.size());
  EXPECT_THROW(compute_rectification(floor, k, 256), Error);
}

// Sub-pixel positions along a scanline where the luma crosses the midpoint
// between two checker colours.
std::vector<double> crossings(const ScalarMap& g, const BinaryMask& valid, bool horizontal, int line, double mid) {
  std::vector<double> out;
  const int n = horizontal ? g.width() : g.height();
  auto val = [&](int i) { return horizontal ? g.at(i, line) : g.at(line, i); };
  auto ok = [&](int i) { return horizontal ? valid.test(i, line) : valid.test(line, i); };
  for (int i = 0; i + 1 < n; ++i) {
    if (!ok(i) || !ok(i + 1)) continue;
    const double a = val(i) - mid;
    const double b = val(i + 1) - mid;
    if (a == 0.0 || (a < 0) != (b < 0)) out.push_back(i + a / (a - b));
  }
  return out;
}

TEST(ComputeRectification, CheckerSquaresComeOutEqual) {
  testing::Room room;
  room.camera = testing::camera(240, 180, 300.0);
  room.supersample = 5;
  const Eigen::Vector3d n = Eigen::Vector3d(0.0, -0.8, 0.6).normalized();
  const Eigen::Matrix3d r = rectifying_rotation(n);
  // Align the checker with the rectified axes so squares can be measured on scanlines.
  room.planes.push_back({"floor", PlaneKind::floor, n, 2.0, r.transpose() * Eigen::Vector3d::UnitX(),
                         testing::checker(0.25, {30, 30, 30}, {220, 220, 220})});
  const auto rendered = testing::render(room);
  const Plane& plane = rendered.bundle.planes.at(0);
  const auto frame = compute_rectification(plane, rendered.bundle.intrinsics, 1024);
  const auto warped = warp_image(rendered.bundle.image, frame.orig_to_rect, frame.rect_size());
  const ScalarMap g = to_grayscale(warped.image);
  const BinaryMask valid = erode_once(erode_once(warped.valid));

  const double mid = 0.5 * (30 + 220);
  const double expected = 0.25 * frame.pixels_per_meter;
  std::vector<double> sides;
  for (bool horizontal : {true, false}) {
    const int lines = horizontal ? frame.rect_height : frame.rect_width;
    for (int line = lines / 8; line < lines; line += lines / 8) {
      const auto c = crossings(g, valid, horizontal, line, mid);
      // A scanline lying along a cell edge hovers around the midpoint.
      bool along_edge = false;
      for (std::size_t i = 1; i < c.size(); ++i) along_edge |= c[i] - c[i - 1] < 0.5 * expected;
      if (along_edge) continue;
      // Half of each dark+light period cancels any bias of the midpoint threshold.
      for (std::size_t i = 2; i < c.size(); ++i) sides.push_back(0.5 * (c[i] - c[i - 2]));
    }
  }
  ASSERT_GT(sides.size(), 20u);
  for (double s : sides) EXPECT_NEAR(s / expected, 1.0, 0.02) << "side " << s << " expected " << expected;
}

TEST(WarpImage, IdentityIsExact) {
  const auto src = testing::random_image({40, 30}, 1);
  const auto w = warp_image(src, Homography(), src.size());
  EXPECT_EQ(w.image, src);
  EXPECT_TRUE(w.valid.all());
}

TEST(WarpImage, IntegerTranslation) {
  const auto src = testing::random_image({40, 30}, 2);
  // Each output pixel reads the source five columns to its right.
  const Homography h = Homography::translation(5, 0).inverse();
  const auto w = warp_image(src, h, src.size());
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      if (x < 35) {
        ASSERT_TRUE(w.valid.test(x, y));
        ASSERT_EQ(w.image.rgb(x, y), src.rgb(x + 5, y));
      } else {
        ASSERT_FALSE(w.valid.test(x, y));
        ASSERT_EQ(w.image.rgb(x, y), (Rgb{0, 0, 0}));
      }
    }
}

TEST(WarpImage, RoundTripOfSmoothImage) {
  const Size s{128, 128};
  const auto src = gradient_image(s);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::Matrix3d m;
    const double a = 0.2 * u(rng);
    const double sc = 1.0 + 0.15 * u(rng);
    m << sc * std::cos(a), -sc * std::sin(a), 8 * u(rng), sc * std::sin(a), sc * std::cos(a), 8 * u(rng),
        3e-4 * u(rng), 3e-4 * u(rng), 1.0;
    const Homography h(m);
    const auto there = warp_image(src, h, s);
    const auto back = warp_image(there.image, h.inverse(), s);
    const BinaryMask both = mask_intersection(back.valid, warp_mask(there.valid, h.inverse(), s, 1.0));
    ASSERT_GT(both.count(), s.area() / 3);
    EXPECT_GT(psnr(src, back.image, &both), 35.0) << "trial " << trial;
  }
}

TEST(WarpMask, IdentityIsExact) {
  const auto m = testing::random_blob_mask({40, 30}, 4);
  EXPECT_EQ(warp_mask(m, Homography(), m.size()), m);
}

TEST(WarpMask, FullMaskMatchesImageValidity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Size s{50, 40};
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Matrix3d m;
    m << 1 + 0.3 * u(rng), 0.2 * u(rng), 15 * u(rng), 0.2 * u(rng), 1 + 0.3 * u(rng), 15 * u(rng),
        1e-3 * u(rng), 1e-3 * u(rng), 1.0;
    const Homography h(m);
    EXPECT_EQ(warp_mask(BinaryMask(s, true), h, s), warp_image(RgbImage(s), h, s).valid);
  }
}

TEST(WarpMask, DoubledBlock) {
  BinaryMask m(16, 16);
  for (int y = 6; y < 10; ++y)
    for (int x = 6; x < 10; ++x) m.set(x, y);
  const Homography about_centre =
      Homography::translation(7.5, 7.5) * Homography::scaling(2, 2) * Homography::translation(-7.5, -7.5);
  const auto w = warp_mask(m, about_centre, m.size());
  EXPECT_GE(w.count(), 60u);
  EXPECT_LE(w.count(), 68u);
}

TEST(WarpMask, StrictThresholdKeepsOnlyFullyCoveredPixels) {
  BinaryMask m(16, 16);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) m.set(x, y);
  const Homography half = Homography::translation(0.5, 0.5);
  const auto loose = warp_mask(m, half, m.size());
  const auto strict = warp_mask(m, half, m.size(), 1.0);
  EXPECT_TRUE(mask_is_subset(strict, loose));
  EXPECT_EQ(strict.count(), 7u * 7u);
}

TEST(UnknownMask, HalfOutOfFrame) {
  const auto k = square_camera();
  RectifiedFrame f;
  f.orig_to_rect = Homography::translation(32, 0);
  f.rect_width = 64;
  f.rect_height = 64;
  const auto m = unknown_mask(f, k);
  EXPECT_EQ(m.count(), 32u * 64u);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) ASSERT_EQ(m.test(x, y), x < 32);
}

TEST(UnknownMask, ComplementOfWarpValidity) {
  const auto room = testing::render(testing::synthetic_room());
  const auto& b = room.bundle;
  for (const auto& p : b.planes) {
    const auto f = compute_rectification(p, b.intrinsics, 256);
    const auto w = warp_image(b.image, f.orig_to_rect, f.rect_size());
    EXPECT_EQ(unknown_mask(f, b.intrinsics), mask_complement(w.valid)) << p.id;
  }
}

TEST(AssignMaskedPixels, SinglePlaneClaimsEverything) {
  SceneBundle b;
  b.intrinsics = square_camera();
  b.image = RgbImage(b.intrinsics.size());
  b.planes.push_back(full_plane("wall", {0, 0, 1}, 3, b.intrinsics.size()));
  const auto mask = testing::random_blob_mask(b.intrinsics.size(), 6);
  const auto a = assign_masked_pixels(b, mask);
  ASSERT_EQ(a.claims.size(), 1u);
  EXPECT_EQ(*a.claim("wall"), mask);
  EXPECT_TRUE(a.residual.none());
  EXPECT_EQ(a.claim("nope"), nullptr);
}

TEST(AssignMaskedPixels, NearerPlaneWins) {
  SceneBundle b;
  b.intrinsics = square_camera();
  b.image = RgbImage(b.intrinsics.size());
  const Eigen::Vector3d n(0.0, 0.6, 0.8);
  b.planes.push_back(full_plane("far", n, kFarOffset, b.intrinsics.size()));
  b.planes.push_back(full_plane("near", n, kNearOffset, b.intrinsics.size()));
  EXPECT_NEAR(b.planes[0].ray_depth(b.intrinsics, 40, 50), 3.0, 1e-12);
  EXPECT_NEAR(b.planes[1].ray_depth(b.intrinsics, 40, 50), 2.0, 1e-12);
  BinaryMask mask(b.intrinsics.size());
  mask.set(40, 50);
  const auto a = assign_masked_pixels(b, mask);
  EXPECT_TRUE(a.claim("near")->test(40, 50));
  EXPECT_TRUE(a.claim("far")->none());
  EXPECT_TRUE(a.residual.none());
}

TEST(AssignMaskedPixels, TiesGoToEarlierPlane) {
  SceneBundle b;
  b.intrinsics = square_camera();
  b.image = RgbImage(b.intrinsics.size());
  b.planes.push_back(full_plane("a", {0, 0, 1}, 2, b.intrinsics.size()));
  b.planes.push_back(full_plane("b", {0, 0, 1}, 2, b.intrinsics.size()));
  const BinaryMask mask(b.intrinsics.size(), true);
  const auto a = assign_masked_pixels(b, mask);
  EXPECT_TRUE(a.claim("a")->all());
  EXPECT_TRUE(a.claim("b")->none());
}

TEST(AssignMaskedPixels, UnsupportedPixelsFallToResidual) {
  SceneBundle b;
  b.intrinsics = square_camera();
  b.image = RgbImage(b.intrinsics.size());
  Plane p = full_plane("floor", {0, 1, 0}, 1, b.intrinsics.size());
  p.support_mask = BinaryMask(b.intrinsics.size());
  for (int y = 40; y < 64; ++y)
    for (int x = 0; x < 64; ++x) p.support_mask.set(x, y);
  b.planes.push_back(p);
  BinaryMask mask(b.intrinsics.size());
  mask.set(5, 5);
  mask.set(5, 50);
  const auto a = assign_masked_pixels(b, mask);
  EXPECT_TRUE(a.residual.test(5, 5));
  EXPECT_TRUE(a.claim("floor")->test(5, 50));
  EXPECT_EQ(a.residual.count() + a.claim("floor")->count(), 2u);
}

TEST(AssignMaskedPixels, PartitionsTheMaskOnRoom) {
  const auto room = testing::render(testing::synthetic_room());
  const auto& b = room.bundle;
  BinaryMask mask = testing::random_blob_mask(b.image.size(), 7);
  const auto a = assign_masked_pixels(b, mask);
  BinaryMask total = a.residual;
  for (const auto& [id, claim] : a.claims) {
    EXPECT_TRUE(masks_disjoint(total, claim)) << id;
    EXPECT_TRUE(mask_is_subset(claim, b.find_plane(id)->support_mask)) << id;
    total = mask_union(total, claim);
  }
  EXPECT_EQ(total, mask);
  EXPECT_THROW(assign_masked_pixels(b, BinaryMask(10, 10)), ValidationError);
}

}  // namespace
}  // namespace fe
