#include "fe/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fe/errors.hpp"

namespace fe {

Homography::Homography(const Eigen::Matrix3d& m) {
  const double det = m.determinant();
  if (!(std::abs(det) > 1e-12) || !std::isfinite(det)) {
    std::ostringstream msg;
    msg << "singular homography (det " << det << ")";
    throw Error(msg.str());
  }
  if (std::abs(m(2, 2)) > 1e-9) {
    m_ = m / m(2, 2);
  } else {
    m_ = m / m.norm();
  }
}

Homography Homography::translation(double dx, double dy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = dx;
  m(1, 2) = dy;
  return Homography(m);
}

Homography Homography::scaling(double sx, double sy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = sx;
  m(1, 1) = sy;
  return Homography(m);
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Eigen::Matrix3d rectifying_rotation(const Eigen::Vector3d& normal) {
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d axis = normal.cross(z);
  const double s = axis.norm();
  const double c = normal.dot(z);
  if (s < 1e-9) {
    if (c > 0.0) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitX()).toRotationMatrix();
  }
  // Rodrigues with the unnormalized axis: R = I + [v] + [v]^2 (1 - c) / s^2.
  Eigen::Matrix3d vx;
  vx << 0.0, -axis.z(), axis.y(), axis.z(), 0.0, -axis.x(), -axis.y(), axis.x(), 0.0;
  return Eigen::Matrix3d::Identity() + vx + vx * vx * ((1.0 - c) / (s * s));
}

RectifiedFrame compute_rectification(const Plane& plane, const CameraIntrinsics& intrinsics,
                                     int target_long_side) {
  if (target_long_side < 32) throw ValidationError("target_long_side must be >= 32");
  if (plane.support_mask.size() != intrinsics.size())
    throw ValidationError("plane '" + plane.id + "': support mask does not match the image");

  const Eigen::Matrix3d to_virtual = rectifying_rotation(plane.normal) * intrinsics.inverse();
  constexpr double kHorizon = 1e-6;
  constexpr double inf = std::numeric_limits<double>::infinity();
  double umin = inf, vmin = inf, umax = -inf, vmax = -inf;
  bool any = false;

  const BinaryMask& support = plane.support_mask;
  for (int y = 0; y < support.height(); ++y) {
    for (int x = 0; x < support.width(); ++x) {
      if (!support.test(x, y)) continue;
      any = true;
      const Eigen::Vector3d centre = to_virtual * Eigen::Vector3d(x, y, 1.0);
      if (std::abs(centre.z()) < kHorizon) {
        std::ostringstream msg;
        msg << "plane '" << plane.id << "': support pixel (" << x << "," << y
            << ") lies on the horizon line";
        throw Error(msg.str());
      }
      if (centre.z() < 0.0) {
        std::ostringstream msg;
        msg << "plane '" << plane.id << "': support pixel (" << x << "," << y
            << ") does not see the plane in front of the camera";
        throw Error(msg.str());
      }
      // The extremes of a pixel's projective image lie on its corners.
      for (int cy = -1; cy <= 1; cy += 2) {
        for (int cx = -1; cx <= 1; cx += 2) {
          const Eigen::Vector3d q = to_virtual * Eigen::Vector3d(x + 0.5 * cx, y + 0.5 * cy, 1.0);
          if (q.z() < kHorizon) {
            std::ostringstream msg;
            msg << "plane '" << plane.id << "': support pixel (" << x << "," << y
                << ") straddles the horizon line";
            throw Error(msg.str());
          }
          const double u = q.x() / q.z();
          const double v = q.y() / q.z();
          umin = std::min(umin, u);
          umax = std::max(umax, u);
          vmin = std::min(vmin, v);
          vmax = std::max(vmax, v);
        }
      }
    }
  }
  if (!any) throw Error("plane '" + plane.id + "': empty support mask");
  const double du = umax - umin;
  const double dv = vmax - vmin;
  const double extent = std::max(du, dv);
  if (!(extent > 0.0) || !std::isfinite(extent))
    throw Error("plane '" + plane.id + "': support warps to a degenerate region");

  const double f = target_long_side / extent;
  Eigen::Matrix3d kv;
  kv << f, 0.0, -0.5 - f * umin, 0.0, f, -0.5 - f * vmin, 0.0, 0.0, 1.0;

  RectifiedFrame frame;
  frame.plane_id = plane.id;
  frame.orig_to_rect = Homography(kv * to_virtual);
  frame.rect_width = std::max(1, static_cast<int>(std::ceil(f * du - 1e-6)));
  frame.rect_height = std::max(1, static_cast<int>(std::ceil(f * dv - 1e-6)));
  frame.virtual_focal = f;
  frame.pixels_per_meter = f / plane.offset;
  return frame;
}

namespace {

struct Preimage {
  double x;
  double y;
  bool inside;
};

// Backward map of output pixel (x, y) with the footprint bounds test.
inline Preimage preimage(const Eigen::Matrix3d& inv, int x, int y, Size src) {
  const double w = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
  if (std::abs(w) < 1e-12) return {0.0, 0.0, false};
  const double sx = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / w;
  const double sy = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / w;
  const bool inside = sx >= -0.5 && sy >= -0.5 && sx < src.width - 0.5 && sy < src.height - 0.5;
  return {sx, sy, inside};
}

struct Bilinear {
  int x0, y0, x1, y1;
  double fx, fy;
};

inline Bilinear bilinear(double sx, double sy, Size src) {
  sx = std::clamp(sx, 0.0, static_cast<double>(src.width - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(src.height - 1));
  Bilinear b;
  b.x0 = static_cast<int>(std::floor(sx));
  b.y0 = static_cast<int>(std::floor(sy));
  b.fx = sx - b.x0;
  b.fy = sy - b.y0;
  // Snap numerically integral coordinates so integer shifts copy exactly.
  if (b.fx < 1e-9) b.fx = 0.0;
  if (b.fy < 1e-9) b.fy = 0.0;
  if (b.fx > 1.0 - 1e-9) {
    b.fx = 0.0;
    b.x0 = std::min(b.x0 + 1, src.width - 1);
  }
  if (b.fy > 1.0 - 1e-9) {
    b.fy = 0.0;
    b.y0 = std::min(b.y0 + 1, src.height - 1);
  }
  b.x1 = std::min(b.x0 + 1, src.width - 1);
  b.y1 = std::min(b.y0 + 1, src.height - 1);
  return b;
}

}  // namespace

WarpedImage warp_image(const RgbImage& src, const Homography& h, Size out_size) {
  WarpedImage out{RgbImage(out_size), BinaryMask(out_size)};
  if (src.empty()) return out;
  const Eigen::Matrix3d inv = h.inverse().matrix();
  for (int y = 0; y < out_size.height; ++y) {
    for (int x = 0; x < out_size.width; ++x) {
      const Preimage p = preimage(inv, x, y, src.size());
      if (!p.inside) continue;
      const Bilinear b = bilinear(p.x, p.y, src.size());
      const auto* a = src.pixel(b.x0, b.y0);
      const auto* c = src.pixel(b.x1, b.y0);
      const auto* d = src.pixel(b.x0, b.y1);
      const auto* e = src.pixel(b.x1, b.y1);
      auto* o = out.image.pixel(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = a[ch] + (c[ch] - a[ch]) * b.fx;
        const double bottom = d[ch] + (e[ch] - d[ch]) * b.fx;
        const double v = top + (bottom - top) * b.fy;
        o[ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
      out.valid.set(x, y);
    }
  }
  return out;
}

BinaryMask warp_mask(const BinaryMask& src, const Homography& h, Size out_size, double threshold) {
  const double cut = threshold - 1e-9;
  BinaryMask out(out_size);
  if (src.size().area() == 0) return out;
  const Eigen::Matrix3d inv = h.inverse().matrix();
  for (int y = 0; y < out_size.height; ++y) {
    for (int x = 0; x < out_size.width; ++x) {
      const Preimage p = preimage(inv, x, y, src.size());
      if (!p.inside) continue;
      const Bilinear b = bilinear(p.x, p.y, src.size());
      const double top = src.test(b.x0, b.y0) + (src.test(b.x1, b.y0) - src.test(b.x0, b.y0)) * b.fx;
      const double bottom =
          src.test(b.x0, b.y1) + (src.test(b.x1, b.y1) - src.test(b.x0, b.y1)) * b.fx;
      if (top + (bottom - top) * b.fy >= cut) out.set(x, y);
    }
  }
  return out;
}

BinaryMask unknown_mask(const RectifiedFrame& frame, const CameraIntrinsics& intrinsics) {
  const Size out_size = frame.rect_size();
  BinaryMask out(out_size);
  const Eigen::Matrix3d inv = frame.orig_to_rect.inverse().matrix();
  for (int y = 0; y < out_size.height; ++y)
    for (int x = 0; x < out_size.width; ++x)
      if (!preimage(inv, x, y, intrinsics.size()).inside) out.set(x, y);
  return out;
}

const BinaryMask* PlaneAssignment::claim(const std::string& plane_id) const {
  for (const auto& [id, mask] : claims)
    if (id == plane_id) return &mask;
  return nullptr;
}

PlaneAssignment assign_masked_pixels(const SceneBundle& bundle, const BinaryMask& inpaint_mask) {
  const auto& k = bundle.intrinsics;
  require_same_size(inpaint_mask.size(), k.size(), "assign_masked_pixels");
  PlaneAssignment out;
  out.residual = BinaryMask(k.size());
  out.claims.reserve(bundle.planes.size());
  for (const auto& p : bundle.planes) out.claims.emplace_back(p.id, BinaryMask(k.size()));

  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (!inpaint_mask.test(x, y)) continue;
      int best = -1;
      double best_depth = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < bundle.planes.size(); ++i) {
        const Plane& p = bundle.planes[i];
        if (!p.support_mask.test(x, y)) continue;
        const double t = p.ray_depth(k, x, y);
        if (t > 0.0 && std::isfinite(t) && t < best_depth) {
          best_depth = t;
          best = static_cast<int>(i);
        }
      }
      if (best < 0) {
        out.residual.set(x, y);
      } else {
        out.claims[best].second.set(x, y);
      }
    }
  }
  return out;
}

}  // namespace fe
