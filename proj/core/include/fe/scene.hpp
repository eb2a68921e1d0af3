#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fe/image.hpp"

namespace fe {

/// Pinhole camera. Camera frame: x right, y down, z forward; pixel (px, py)
/// back-projects along K^-1 (px, py, 1). Pixel centres sit at integer
/// coordinates.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Size size() const noexcept { return {width, height}; }
  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse() const;
  Eigen::Vector3d back_project(double px, double py) const {
    return {(px - cx) / fx, (py - cy) / fy, 1.0};
  }
};

enum class PlaneKind { floor, ceiling, wall, other };

std::string_view to_string(PlaneKind kind);
std::optional<PlaneKind> parse_plane_kind(std::string_view s);

/// Points X with normal . X == offset, normal unit length and offset > 0.
struct CanonicalPlane {
  Eigen::Vector3d normal;
  double offset = 0.0;
};

/// Normalizes the normal and flips the sign so the offset is positive.
/// Throws ValidationError on a zero normal or a plane through the camera
/// centre.
CanonicalPlane canonicalize_plane(const Eigen::Vector3d& normal, double offset);

struct Plane {
  std::string id;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 1.0;
  /// Amodal extent: includes the parts hidden behind objects.
  BinaryMask support_mask;
  PlaneKind kind = PlaneKind::other;

  /// Depth t along the pixel ray K^-1 p at which it meets the plane. Negative
  /// or infinite when the ray misses the plane in front of the camera.
  double ray_depth(const CameraIntrinsics& k, double px, double py) const;
};

struct InstanceMask {
  std::string id;
  std::string label;
  BinaryMask mask;
};

/// One scene: image, camera, room layout and object masks. Immutable once
/// loaded.
struct SceneBundle {
  RgbImage image;
  CameraIntrinsics intrinsics;
  std::vector<Plane> planes;
  std::vector<InstanceMask> instances;

  const Plane* find_plane(std::string_view id) const;
  const InstanceMask* find_instance(std::string_view id) const;
};

struct Violation {
  std::string entity;  // "plane:floor", "instance:chair1", "intrinsics", "image"
  std::string kind;    // "duplicate-id", "empty-mask", "dimension-mismatch", ...
  std::string message;
};

/// Checks every documented invariant; an empty result means the bundle is
/// valid.
std::vector<Violation> validate_scene(const SceneBundle& bundle);

/// Reads `<dir>/scene.json` and the PNGs it references. Planes are
/// canonicalized; normals off unit length are renormalized and reported in
/// `warnings`. Throws ValidationError naming file and field on any defect.
SceneBundle load_scene(const std::filesystem::path& dir,
                       std::vector<std::string>* warnings = nullptr);

/// Writes the bundle in the layout load_scene reads.
void save_scene(const SceneBundle& bundle, const std::filesystem::path& dir);

}  // namespace fe
