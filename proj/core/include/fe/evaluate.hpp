#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fe/external.hpp"
#include "fe/image.hpp"
#include "fe/metrics.hpp"
#include "fe/pipeline.hpp"

namespace fe {

/// Random blob masks: each is a union of 3-8 overlapping ellipses whose
/// coverage of the frame lies in [coverage_min, coverage_max].
struct BlobMaskParams {
  int count = 1;
  double coverage_min = 0.1;
  double coverage_max = 0.4;
};

/// Furniture-like masks: each silhouette is cropped to its bounding box,
/// scaled (nearest neighbour) by a factor drawn from [scale_min, scale_max]
/// and placed uniformly at random fully inside the frame. `count` masks
/// cycle through the silhouettes; 0 means one per silhouette.
struct SilhouetteMaskParams {
  std::vector<BinaryMask> silhouettes;
  int count = 0;
  double scale_min = 1.0;
  double scale_max = 1.0;
};

std::vector<BinaryMask> synthesize_test_masks(Size frame, const BlobMaskParams& params, std::uint64_t seed);
std::vector<BinaryMask> synthesize_test_masks(Size frame, const SilhouetteMaskParams& params, std::uint64_t seed);

/// identity: prediction is the ground truth. whole: one backend call on the
/// full image. planes: the plane-wise pipeline using the scene's scene.json.
struct MethodSpec {
  enum class Mode { identity, whole, planes };

  std::string label;
  Mode mode = Mode::whole;
  PipelineConfig config;

  /// {"label": "...", "mode": "identity"|"whole"|"planes", ...pipeline
  /// config fields}
  static MethodSpec from_json(const nlohmann::json& j);
  static std::vector<MethodSpec> load_list(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct EvalRecord {
  std::string scene_id;
  std::string method;
  std::optional<double> lpips;
  double incoherence = 0.0;
  double psnr = 0.0;
  double coverage = 0.0;
};

struct EvalFailure {
  std::string scene_id;
  std::string method;
  std::string message;
};

struct MethodMeans {
  std::string method;
  std::size_t records = 0;
  std::size_t failures = 0;
  std::optional<double> lpips;
  double incoherence = 0.0;
  double psnr = 0.0;
};

struct EvalOptions {
  IncoherenceParams incoherence;
  /// PSNR over the test mask instead of the whole image.
  bool psnr_masked_region = false;
  std::optional<AdapterConfig> lpips;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<EvalFailure> failures;
  /// One entry per method, in the order the methods were given.
  std::vector<MethodMeans> means;
  nlohmann::json dataset;
  nlohmann::json config;

  /// Fills `means` from `records` and `failures`, keeping `methods` order.
  void aggregate(const std::vector<std::string>& methods);

  std::string csv() const;
  nlohmann::json to_json() const;
  /// Human-readable table, "—" where LPIPS is missing.
  std::string table() const;
  /// Writes report.csv and report.json into `dir`.
  void write(const std::filesystem::path& dir) const;
};

/// Parses report.csv text back into records ("inf" for the PSNR sentinel,
/// empty LPIPS cell for a missing score).
std::vector<EvalRecord> parse_report_csv(const std::string& text);

/// Runs every method on every (scene, mask) pair of a dataset laid out as
/// <dir>/<scene>/image.png, <dir>/<scene>/masks/*.png and an optional
/// <dir>/<scene>/scene.json. Failures are recorded and left out of the means.
EvalReport evaluate(const std::filesystem::path& dataset_dir, const std::vector<MethodSpec>& methods,
                    const EvalOptions& options = {});

}  // namespace fe
