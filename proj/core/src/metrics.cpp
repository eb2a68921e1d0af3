#include "fe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fe/errors.hpp"
#include "fe/png_io.hpp"

namespace fe {

std::optional<EdgeDetector> parse_edge_detector(std::string_view s) {
  if (s == "sobel") return EdgeDetector::sobel;
  if (s == "external" || s == "external-file") return EdgeDetector::external_file;
  return std::nullopt;
}

void IncoherenceParams::validate() const {
  if (!(gt_enhance_threshold > 0.0 && gt_enhance_threshold < 1.0))
    throw ValidationError("gt_enhance_threshold must lie in (0, 1)");
  if (!(residual_threshold >= 0.0 && residual_threshold < 1.0))
    throw ValidationError("residual_threshold must lie in [0, 1)");
  if (!(blur_sigma > 0.0)) throw ValidationError("blur_sigma must be positive");
}

EdgeMap sobel_edge_map(const RgbImage& image) {
  const ScalarMap gray = to_grayscale(image);
  const int w = gray.width();
  const int h = gray.height();
  EdgeMap out(gray.size());
  const double norm = 4.0 * std::sqrt(2.0) * 255.0;
  auto g = [&](int x, int y) { return gray.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (g(x + 1, y - 1) + 2.0 * g(x + 1, y) + g(x + 1, y + 1)) -
                        (g(x - 1, y - 1) + 2.0 * g(x - 1, y) + g(x - 1, y + 1));
      const double gy = (g(x - 1, y + 1) + 2.0 * g(x, y + 1) + g(x + 1, y + 1)) -
                        (g(x - 1, y - 1) + 2.0 * g(x, y - 1) + g(x + 1, y - 1));
      out.at(x, y) = std::clamp(std::sqrt(gx * gx + gy * gy) / norm, 0.0, 1.0);
    }
  }
  return out;
}

EdgeMap load_edge_map(const std::filesystem::path& path, Size expected) {
  if (!std::filesystem::exists(path)) throw ValidationError("missing edge map: " + path.string());
  EdgeMap m = read_gray_png(path);
  require_same_size(m.size(), expected, ("edge map " + path.string()).c_str());
  return m;
}

ScalarMap gaussian_blur(const ScalarMap& map, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_blur: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = map.width();
  const int h = map.height();
  ScalarMap tmp(map.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * map.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = acc;
    }
  ScalarMap out(map.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = acc;
    }
  return out;
}

ScalarMap incoherence_map(const EdgeMap& blurred_gt_edges, const EdgeMap& pred_edges, const BinaryMask& mask,
                          const IncoherenceParams& params) {
  require_same_size(blurred_gt_edges.size(), pred_edges.size(), "incoherence");
  require_same_size(blurred_gt_edges.size(), mask.size(), "incoherence");
  ScalarMap out(mask.size());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.test(x, y)) continue;
      double gt = blurred_gt_edges.at(x, y);
      if (gt > params.gt_enhance_threshold) gt = 1.0;
      double r = pred_edges.at(x, y) - gt;
      if (r <= params.residual_threshold) r = 0.0;
      out.at(x, y) = r;
    }
  }
  return out;
}

double incoherence_from_edges(const EdgeMap& blurred_gt_edges, const EdgeMap& pred_edges, const BinaryMask& mask,
                              const IncoherenceParams& params) {
  const std::size_t n = mask.count();
  if (n == 0) throw ValidationError("incoherence: empty mask");
  const ScalarMap residual = incoherence_map(blurred_gt_edges, pred_edges, mask, params);
  double sum = 0.0;
  for (double v : residual.values()) sum += v;
  return sum / static_cast<double>(n);
}

double incoherence(const EdgeMap& gt_edges, const EdgeMap& pred_edges, const BinaryMask& mask,
                   const IncoherenceParams& params) {
  params.validate();
  return incoherence_from_edges(gaussian_blur(gt_edges, params.blur_sigma), pred_edges, mask, params);
}

double incoherence(const RgbImage& gt, const RgbImage& pred, const BinaryMask& mask,
                   const IncoherenceParams& params) {
  require_same_size(gt.size(), pred.size(), "incoherence");
  return incoherence(sobel_edge_map(gt), sobel_edge_map(pred), mask, params);
}

double psnr(const RgbImage& gt, const RgbImage& pred, const BinaryMask* region) {
  require_same_size(gt.size(), pred.size(), "psnr");
  if (region) require_same_size(gt.size(), region->size(), "psnr region");
  double sse = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (region && !region->test(x, y)) continue;
      const auto* a = gt.pixel(x, y);
      const auto* b = pred.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(a[c]) - b[c];
        sse += d * d;
      }
      n += 3;
    }
  }
  if (n == 0) throw ValidationError("psnr: empty region");
  if (sse == 0.0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(n);
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace fe
