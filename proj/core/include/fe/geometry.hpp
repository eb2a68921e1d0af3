#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "fe/image.hpp"
#include "fe/scene.hpp"

namespace fe {

/// Projective map of the image plane, stored normalized: m(2,2) == 1 when
/// |m(2,2)| > 1e-9, unit Frobenius norm otherwise.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  /// Throws Error when |det(m)| <= 1e-12.
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography translation(double dx, double dy);
  static Homography scaling(double sx, double sy);

  const Eigen::Matrix3d& matrix() const noexcept { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Homography inverse() const;
  /// (a * b)(p) == a(b(p)).
  friend Homography operator*(const Homography& a, const Homography& b) {
    return Homography(a.m_ * b.m_);
  }

  /// Maps (x, y); the returned w is the homogeneous scale before division.
  Eigen::Vector3d apply_homogeneous(double x, double y) const {
    return m_ * Eigen::Vector3d(x, y, 1.0);
  }
  Eigen::Vector2d apply(double x, double y) const {
    const Eigen::Vector3d h = apply_homogeneous(x, y);
    return {h.x() / h.z(), h.y() / h.z()};
  }

 private:
  Eigen::Matrix3d m_;
};

/// Minimal-angle rotation taking `normal` onto +z. For normal == -z the
/// rotation is by pi about +x.
Eigen::Matrix3d rectifying_rotation(const Eigen::Vector3d& normal);

/// Fronto-parallel view of one plane.
struct RectifiedFrame {
  std::string plane_id;
  Homography orig_to_rect;
  int rect_width = 0;
  int rect_height = 0;
  double pixels_per_meter = 0.0;
  double virtual_focal = 0.0;

  Size rect_size() const noexcept { return {rect_width, rect_height}; }
};

/// H = K_v R K^-1 with K_v fit so the warped support mask's pixel footprints
/// span exactly `target_long_side` pixels on the longer side, starting at
/// the origin. Throws Error on a degenerate or horizon-touching support.
RectifiedFrame compute_rectification(const Plane& plane, const CameraIntrinsics& intrinsics,
                                     int target_long_side);

struct WarpedImage {
  RgbImage image;
  BinaryMask valid;
};

/// Backward bilinear warp. Pixel centres are at integer coordinates and a
/// source pixel covers [x-0.5, x+0.5); preimages outside the source
/// footprint come back black and invalid.
WarpedImage warp_image(const RgbImage& src, const Homography& h, Size out_size);

/// Bilinear sample of the 0/1 field thresholded at `threshold` (a pixel is
/// set when the sample reaches it). A threshold of 1 keeps only pixels
/// whose every contributing source pixel is set.
BinaryMask warp_mask(const BinaryMask& src, const Homography& h, Size out_size, double threshold = 0.5);

/// Rectified pixels whose preimage falls outside the original image.
BinaryMask unknown_mask(const RectifiedFrame& frame, const CameraIntrinsics& intrinsics);

struct PlaneAssignment {
  /// One entry per plane, manifest order.
  std::vector<std::pair<std::string, BinaryMask>> claims;
  BinaryMask residual;

  const BinaryMask* claim(const std::string& plane_id) const;
};

/// Each masked pixel goes to the supporting plane its ray meets first
/// (ties to the earlier plane); unclaimed pixels form the residual.
PlaneAssignment assign_masked_pixels(const SceneBundle& bundle, const BinaryMask& inpaint_mask);

}  // namespace fe
