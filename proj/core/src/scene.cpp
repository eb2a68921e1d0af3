#include "fe/scene.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "fe/errors.hpp"
#include "fe/png_io.hpp"

namespace fe {

using nlohmann::json;

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix3d CameraIntrinsics::inverse() const {
  Eigen::Matrix3d k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

std::string_view to_string(PlaneKind kind) {
  switch (kind) {
    case PlaneKind::floor: return "floor";
    case PlaneKind::ceiling: return "ceiling";
    case PlaneKind::wall: return "wall";
    case PlaneKind::other: return "other";
  }
  return "other";
}

std::optional<PlaneKind> parse_plane_kind(std::string_view s) {
  if (s == "floor") return PlaneKind::floor;
  if (s == "ceiling") return PlaneKind::ceiling;
  if (s == "wall") return PlaneKind::wall;
  if (s == "other") return PlaneKind::other;
  return std::nullopt;
}

CanonicalPlane canonicalize_plane(const Eigen::Vector3d& normal, double offset) {
  const double norm = normal.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ValidationError("degenerate plane: zero-norm normal");
  }
  CanonicalPlane out{normal / norm, offset / norm};
  if (out.offset == 0.0) {
    throw ValidationError("degenerate plane: passes through the camera centre (offset 0)");
  }
  if (out.offset < 0.0) {
    out.normal = -out.normal;
    out.offset = -out.offset;
  }
  return out;
}

double Plane::ray_depth(const CameraIntrinsics& k, double px, double py) const {
  const double denom = normal.dot(k.back_project(px, py));
  return offset / denom;
}

const Plane* SceneBundle::find_plane(std::string_view id) const {
  for (const auto& p : planes)
    if (p.id == id) return &p;
  return nullptr;
}

const InstanceMask* SceneBundle::find_instance(std::string_view id) const {
  for (const auto& i : instances)
    if (i.id == id) return &i;
  return nullptr;
}

namespace {

std::string dims(Size s) { return std::to_string(s.width) + "x" + std::to_string(s.height); }

}  // namespace

std::vector<Violation> validate_scene(const SceneBundle& bundle) {
  std::vector<Violation> out;
  const auto& k = bundle.intrinsics;
  if (!(k.fx > 0.0) || !(k.fy > 0.0))
    out.push_back({"intrinsics", "bad-intrinsics", "focal lengths must be positive"});
  if (k.width < 16 || k.height < 16)
    out.push_back({"intrinsics", "bad-intrinsics", "image must be at least 16x16, got " + dims(k.size())});
  if (k.cx < 0.0 || k.cx > k.width || k.cy < 0.0 || k.cy > k.height)
    out.push_back({"intrinsics", "bad-intrinsics", "principal point outside the image"});
  if (bundle.image.size() != k.size())
    out.push_back({"image", "dimension-mismatch",
                   "image is " + dims(bundle.image.size()) + ", intrinsics say " + dims(k.size())});

  std::set<std::string> seen;
  for (const auto& p : bundle.planes) {
    const std::string entity = "plane:" + p.id;
    if (!seen.insert(p.id).second)
      out.push_back({entity, "duplicate-id", "plane id '" + p.id + "' is used more than once"});
    if (std::abs(p.normal.norm() - 1.0) > 1e-6)
      out.push_back({entity, "non-unit-normal", "normal norm is " + std::to_string(p.normal.norm())});
    if (!(p.offset > 0.0))
      out.push_back({entity, "non-canonical-offset", "offset must be positive"});
    if (p.support_mask.size() != k.size())
      out.push_back({entity, "dimension-mismatch",
                     "support mask is " + dims(p.support_mask.size()) + ", image is " + dims(k.size())});
  }

  seen.clear();
  for (const auto& inst : bundle.instances) {
    const std::string entity = "instance:" + inst.id;
    if (!seen.insert(inst.id).second)
      out.push_back({entity, "duplicate-id", "instance id '" + inst.id + "' is used more than once"});
    if (inst.mask.size() != k.size())
      out.push_back({entity, "dimension-mismatch",
                     "mask is " + dims(inst.mask.size()) + ", image is " + dims(k.size())});
    else if (inst.mask.none())
      out.push_back({entity, "empty-mask", "instance mask has no set pixels"});
  }
  return out;
}

namespace {

[[noreturn]] void fail(const std::filesystem::path& file, const std::string& field,
                       const std::string& what) {
  throw ValidationError(file.string() + ": " + field + ": " + what);
}

const json& field(const json& obj, const char* key, const std::filesystem::path& file,
                  const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) fail(file, where + key, "missing field");
  return obj.at(key);
}

double number(const json& obj, const char* key, const std::filesystem::path& file,
              const std::string& where) {
  const json& v = field(obj, key, file, where);
  if (!v.is_number()) fail(file, where + key, "expected a number");
  return v.get<double>();
}

std::string text(const json& obj, const char* key, const std::filesystem::path& file,
                 const std::string& where) {
  const json& v = field(obj, key, file, where);
  if (!v.is_string()) fail(file, where + key, "expected a string");
  return v.get<std::string>();
}

BinaryMask load_mask(const std::filesystem::path& dir, const std::string& rel,
                     const std::filesystem::path& manifest, const std::string& where, Size expected) {
  const auto path = dir / rel;
  if (!std::filesystem::exists(path)) fail(manifest, where + "mask", "missing file " + path.string());
  BinaryMask m = read_mask_png(path);
  if (m.size() != expected)
    fail(path, where + "mask",
         "dimension mismatch: mask is " + dims(m.size()) + ", image is " + dims(expected));
  return m;
}

}  // namespace

SceneBundle load_scene(const std::filesystem::path& dir, std::vector<std::string>* warnings) {
  const auto manifest = dir / "scene.json";
  std::ifstream in(manifest);
  if (!in) throw ValidationError(manifest.string() + ": missing file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(manifest.string() + ": malformed JSON: " + e.what());
  }

  SceneBundle bundle;
  const json& k = field(doc, "intrinsics", manifest, "");
  auto& intr = bundle.intrinsics;
  intr.fx = number(k, "fx", manifest, "intrinsics.");
  intr.fy = number(k, "fy", manifest, "intrinsics.");
  intr.cx = number(k, "cx", manifest, "intrinsics.");
  intr.cy = number(k, "cy", manifest, "intrinsics.");
  intr.width = static_cast<int>(number(k, "width", manifest, "intrinsics."));
  intr.height = static_cast<int>(number(k, "height", manifest, "intrinsics."));

  const std::string image_rel = doc.contains("image") ? text(doc, "image", manifest, "") : "image.png";
  const auto image_path = dir / image_rel;
  if (!std::filesystem::exists(image_path)) fail(manifest, "image", "missing file " + image_path.string());
  bundle.image = read_rgb_png(image_path);
  if (bundle.image.size() != intr.size())
    fail(image_path, "image",
         "dimension mismatch: image is " + dims(bundle.image.size()) + ", intrinsics say " +
             dims(intr.size()));

  std::set<std::string> ids;
  const json planes = doc.value("planes", json::array());
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const json& pj = planes[i];
    const std::string where = "planes[" + std::to_string(i) + "].";
    Plane p;
    p.id = text(pj, "id", manifest, where);
    if (!ids.insert(p.id).second) fail(manifest, where + "id", "duplicate plane id '" + p.id + "'");
    const json& nj = field(pj, "normal", manifest, where);
    if (!nj.is_array() || nj.size() != 3) fail(manifest, where + "normal", "expected 3 numbers");
    Eigen::Vector3d n(nj[0].get<double>(), nj[1].get<double>(), nj[2].get<double>());
    const double offset = number(pj, "offset", manifest, where);
    const double norm = n.norm();
    if (std::abs(norm - 1.0) > 1e-3 && warnings) {
      std::ostringstream msg;
      msg << manifest.string() << ": " << where << "normal: norm " << norm << " renormalized";
      warnings->push_back(msg.str());
    }
    CanonicalPlane c;
    try {
      c = canonicalize_plane(n, offset);
    } catch (const ValidationError& e) {
      fail(manifest, where + "normal", e.what());
    }
    p.normal = c.normal;
    p.offset = c.offset;
    const std::string kind = pj.value("kind", std::string("other"));
    const auto parsed = parse_plane_kind(kind);
    if (!parsed) fail(manifest, where + "kind", "unknown plane kind '" + kind + "'");
    p.kind = *parsed;
    const std::string rel = pj.contains("mask") ? text(pj, "mask", manifest, where) : "planes/" + p.id + ".png";
    p.support_mask = load_mask(dir, rel, manifest, where, intr.size());
    bundle.planes.push_back(std::move(p));
  }

  ids.clear();
  const json instances = doc.value("instances", json::array());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const json& ij = instances[i];
    const std::string where = "instances[" + std::to_string(i) + "].";
    InstanceMask inst;
    inst.id = text(ij, "id", manifest, where);
    if (!ids.insert(inst.id).second) fail(manifest, where + "id", "duplicate instance id '" + inst.id + "'");
    inst.label = ij.value("label", std::string());
    const std::string rel =
        ij.contains("mask") ? text(ij, "mask", manifest, where) : "instances/" + inst.id + ".png";
    inst.mask = load_mask(dir, rel, manifest, where, intr.size());
    bundle.instances.push_back(std::move(inst));
  }

  const auto violations = validate_scene(bundle);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw ValidationError(manifest.string() + ": " + v.entity + ": " + v.kind + ": " + v.message);
  }
  return bundle;
}

void save_scene(const SceneBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json doc;
  const auto& k = bundle.intrinsics;
  doc["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                       {"width", k.width}, {"height", k.height}};
  doc["image"] = "image.png";
  write_png(dir / "image.png", bundle.image);
  doc["planes"] = json::array();
  for (const auto& p : bundle.planes) {
    const std::string rel = "planes/" + p.id + ".png";
    doc["planes"].push_back({{"id", p.id},
                             {"normal", {p.normal.x(), p.normal.y(), p.normal.z()}},
                             {"offset", p.offset},
                             {"kind", std::string(to_string(p.kind))},
                             {"mask", rel}});
    write_png(dir / rel, p.support_mask);
  }
  doc["instances"] = json::array();
  for (const auto& inst : bundle.instances) {
    const std::string rel = "instances/" + inst.id + ".png";
    doc["instances"].push_back({{"id", inst.id}, {"label", inst.label}, {"mask", rel}});
    write_png(dir / rel, inst.mask);
  }
  std::ofstream out(dir / "scene.json");
  if (!out) throw Error("cannot write " + (dir / "scene.json").string());
  out << doc.dump(2) << '\n';
}

}  // namespace fe
