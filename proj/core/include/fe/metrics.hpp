#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string_view>

#include "fe/image.hpp"

namespace fe {

/// Edge probabilities in [0, 1] at image size.
using EdgeMap = ScalarMap;

enum class EdgeDetector { sobel, external_file };

std::optional<EdgeDetector> parse_edge_detector(std::string_view s);

struct IncoherenceParams {
  /// Blurred ground-truth edges above this are treated as certain edges.
  double gt_enhance_threshold = 0.1;
  /// Residual edge strength at or below this is ignored.
  double residual_threshold = 0.01;
  double blur_sigma = 2.0;
  EdgeDetector edge_detector = EdgeDetector::sobel;

  void validate() const;
};

/// Normalized 3x3 Sobel magnitude of the luma, replicate-padded, divided by
/// the largest attainable response 4*sqrt(2)*255.
EdgeMap sobel_edge_map(const RgbImage& image);

/// Reads an edge map produced by an external detector (8-bit grayscale PNG
/// scaled to [0, 1]); throws ValidationError on missing file or size
/// mismatch.
EdgeMap load_edge_map(const std::filesystem::path& path, Size expected);

/// Separable Gaussian, radius ceil(3 sigma), replicate padding.
ScalarMap gaussian_blur(const ScalarMap& map, double sigma);

/// Thresholding and averaging stage of the incoherence score, taking the
/// already blurred ground-truth edges:
///   gt[gt > t_gt] = 1; r = pred - gt; r[r <= t_r] = 0; mean(r over mask).
double incoherence_from_edges(const EdgeMap& blurred_gt_edges, const EdgeMap& pred_edges, const BinaryMask& mask,
                              const IncoherenceParams& params);

/// Per-pixel residual map of the stage above (0 outside the mask).
ScalarMap incoherence_map(const EdgeMap& blurred_gt_edges, const EdgeMap& pred_edges, const BinaryMask& mask,
                          const IncoherenceParams& params);

/// Full score from raw edge maps: blurs the ground-truth edges first.
double incoherence(const EdgeMap& gt_edges, const EdgeMap& pred_edges, const BinaryMask& mask,
                   const IncoherenceParams& params);

/// Full score from images with the Sobel detector. Throws ValidationError
/// on an empty mask or mismatched sizes.
double incoherence(const RgbImage& gt, const RgbImage& pred, const BinaryMask& mask,
                   const IncoherenceParams& params = {});

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(255^2 / MSE) over the region (whole image when null), MSE
/// averaged over pixels and channels. Identical inputs give +inf.
double psnr(const RgbImage& gt, const RgbImage& pred, const BinaryMask* region = nullptr);

}  // namespace fe
