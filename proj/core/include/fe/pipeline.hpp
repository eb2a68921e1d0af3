#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fe/geometry.hpp"
#include "fe/image.hpp"
#include "fe/inpaint.hpp"
#include "fe/scene.hpp"

namespace fe {

/// JSON form: { "backend": {...}, "target_long_side": 512,
/// "mask_dilation_px": 3, "feather_px": 2, "histogram_match": true,
/// "seed": 0 }
///
/// Backend objects: {"kind": "patchmatch", "patch_size": 7, "em_iters": 8,
/// "nnf_iters": 5, "search_decay": 0.5, "min_pyramid_side": 14},
/// {"kind": "diffusion"}, or an external adapter ({"kind": "command"|"http",
/// ...}, see AdapterConfig).
struct PipelineConfig {
  nlohmann::json backend = {{"kind", "patchmatch"}};
  int target_long_side = 512;
  int mask_dilation_px = 3;
  int feather_px = 2;
  bool histogram_match = true;
  std::uint64_t seed = 0;

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Builds a backend from its JSON description. A patchmatch backend takes
/// `seed` unless the description carries its own.
std::unique_ptr<InpaintBackend> make_backend(const nlohmann::json& backend, std::uint64_t seed);

/// Which instances to erase.
struct Selection {
  bool all = false;
  std::vector<std::string> ids;

  static Selection everything() { return {true, {}}; }
  static Selection only(std::vector<std::string> ids) { return {false, std::move(ids)}; }
};

/// Union of the selected instance masks dilated by a disk. Throws
/// ValidationError on an unknown id.
BinaryMask build_inpaint_mask(const std::vector<InstanceMask>& instances, const Selection& selection,
                              int dilation_px, Size image_size);

struct StageTimings {
  double rectify_ms = 0.0;
  double backend_ms = 0.0;
  double unrectify_ms = 0.0;
  double composite_ms = 0.0;
  double final_pass_ms = 0.0;
  double total_ms = 0.0;

  StageTimings& operator+=(const StageTimings& o);
  nlohmann::json to_json() const;
};

struct PlaneInpaintResult {
  std::string plane_id;
  /// True when the claim was empty or the plane had no usable context.
  bool skipped = false;
  std::string skip_reason;
  RectifiedFrame frame;
  RgbImage rectified_input;
  BinaryMask rectified_mask;
  RgbImage rectified_output;
  /// At image size; only pixels inside `claim` are used downstream.
  RgbImage unrectified_patch;
  BinaryMask claim;
  StageTimings timings;
};

/// Rectify one plane, fill (furniture or out-of-frame or off-plane pixels)
/// with the backend, optionally histogram-match the fill to the plane's
/// known texture and warp back to the image.
PlaneInpaintResult inpaint_plane(const SceneBundle& bundle, const Plane& plane, const BinaryMask& inpaint_mask,
                                 const BinaryMask& claim, const PipelineConfig& config,
                                 const InpaintBackend& backend);

/// Pastes each plane's patch over its claim. Claimed pixels within
/// `feather_px` (chessboard distance) of a known pixel blend linearly
/// toward `base`: weight d / (feather_px + 1) on the patch at distance d.
/// `known` defaults to the complement of all claims. When `blendable` is
/// given, claimed pixels outside it (where `base` shows the object being
/// removed) are pasted without blending. Throws ValidationError on
/// overlapping claims.
RgbImage composite(const RgbImage& base, const std::vector<PlaneInpaintResult>& results, int feather_px,
                   const BinaryMask* known = nullptr, const BinaryMask* blendable = nullptr);

struct PipelineResult {
  RgbImage final_image;
  BinaryMask inpaint_mask;
  std::vector<PlaneInpaintResult> per_plane;
  BinaryMask residual_mask;
  StageTimings timings;
  bool final_pass_ran = false;
  int backend_calls = 0;
  std::vector<std::string> warnings;
};

/// Full object removal: mask, per-plane fill, composite, then one
/// full-resolution pass over pixels no plane claimed.
PipelineResult erase(const SceneBundle& bundle, const Selection& selection, const PipelineConfig& config,
                     const InpaintBackend& backend, const std::optional<std::filesystem::path>& dump_dir = {});

/// As above with the backend built from `config.backend`.
PipelineResult erase(const SceneBundle& bundle, const Selection& selection, const PipelineConfig& config,
                     const std::optional<std::filesystem::path>& dump_dir = {});

}  // namespace fe
