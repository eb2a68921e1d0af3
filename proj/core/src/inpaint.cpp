#include "fe/inpaint.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "fe/errors.hpp"

namespace fe {

void validate_request(const InpaintRequest& request) {
  require_same_size(request.image.size(), request.mask.size(), "inpaint request");
  if (request.image.size().area() == 0) throw ValidationError("inpaint request: empty image");
  if (request.mask.all()) throw ValidationError("inpaint request: mask covers every pixel");
}

RgbImage inpaint(const InpaintRequest& request, const InpaintBackend& backend) {
  validate_request(request);
  if (request.mask.none()) return request.image;
  RgbImage filled;
  try {
    filled = backend.fill(request);
  } catch (const BackendError&) {
    throw;
  } catch (const InsufficientContextError&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendError(backend.name(), e.what());
  }
  if (filled.size() != request.image.size()) {
    throw BackendError(backend.name(), "returned " + std::to_string(filled.width()) + "x" +
                                           std::to_string(filled.height()) + ", expected " +
                                           std::to_string(request.image.width()) + "x" +
                                           std::to_string(request.image.height()));
  }
  copy_masked(request.image, mask_complement(request.mask), filled);
  return filled;
}

RgbImage diffusion_fill(const InpaintRequest& request) {
  validate_request(request);
  const int w = request.image.width();
  const int h = request.image.height();
  const BinaryMask& hole = request.mask;
  std::vector<double> v(static_cast<std::size_t>(w) * h * 3);
  auto bytes = request.image.bytes();
  std::copy(bytes.begin(), bytes.end(), v.begin());
  auto at = [&](int x, int y) { return v.data() + (static_cast<std::size_t>(y) * w + x) * 3; };

  // Onion-peel seed: each layer takes the mean of its already-known
  // 4-neighbours.
  BinaryMask filled = mask_complement(hole);
  std::vector<std::array<int, 2>> front;
  std::vector<double> staged;
  for (;;) {
    front.clear();
    staged.clear();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (filled.test(x, y)) continue;
        double acc[3] = {0, 0, 0};
        int n = 0;
        const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (const auto& q : nb) {
          if (!filled.test_clamped(q[0], q[1])) continue;
          const double* p = at(q[0], q[1]);
          for (int c = 0; c < 3; ++c) acc[c] += p[c];
          ++n;
        }
        if (n == 0) continue;
        front.push_back({x, y});
        for (double a : acc) staged.push_back(a / n);
      }
    }
    if (front.empty()) break;
    for (std::size_t k = 0; k < front.size(); ++k) {
      std::copy_n(staged.begin() + 3 * k, 3, at(front[k][0], front[k][1]));
      filled.set(front[k][0], front[k][1]);
    }
  }

  std::vector<std::array<int, 2>> pixels;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (hole.test(x, y)) pixels.push_back({x, y});

  // Where known pixels bracket a hole pixel along its row or column, blend
  // the linear interpolations (shorter spans weigh more). Linear fields are
  // then reproduced before the first sweep.
  auto run_end = [&](int x, int y, int dx, int dy) {
    int k = 1;
    while (hole.test_clamped(x + k * dx, y + k * dy)) ++k;
    return Size{w, h}.contains(x + k * dx, y + k * dy) ? k : -1;
  };
  std::vector<double> seeded(pixels.size() * 3);
  std::vector<bool> has_seed(pixels.size(), false);
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const int x = pixels[k][0];
    const int y = pixels[k][1];
    double acc[3] = {0, 0, 0};
    double wsum = 0.0;
    for (const auto& dir : {std::array<int, 2>{1, 0}, std::array<int, 2>{0, 1}}) {
      const int a = run_end(x, y, -dir[0], -dir[1]);
      const int b = run_end(x, y, dir[0], dir[1]);
      if (a < 0 || b < 0) continue;
      const auto* ia = request.image.pixel(x - a * dir[0], y - a * dir[1]);
      const auto* ib = request.image.pixel(x + b * dir[0], y + b * dir[1]);
      const double span = a + b;
      const double weight = 1.0 / span;
      for (int c = 0; c < 3; ++c) acc[c] += weight * (ia[c] * b + ib[c] * a) / span;
      wsum += weight;
    }
    if (wsum == 0.0) continue;
    has_seed[k] = true;
    for (int c = 0; c < 3; ++c) seeded[3 * k + c] = acc[c] / wsum;
  }
  for (std::size_t k = 0; k < pixels.size(); ++k)
    if (has_seed[k]) std::copy_n(seeded.begin() + 3 * k, 3, at(pixels[k][0], pixels[k][1]));

  std::vector<double> next(pixels.size() * 3);
  const int max_sweeps = 10 * std::max(w, h);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t k = 0; k < pixels.size(); ++k) {
      const int x = pixels[k][0];
      const int y = pixels[k][1];
      double acc[3] = {0, 0, 0};
      int n = 0;
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
        const double* p = at(q[0], q[1]);
        for (int c = 0; c < 3; ++c) acc[c] += p[c];
        ++n;
      }
      const double* cur = at(x, y);
      for (int c = 0; c < 3; ++c) {
        next[3 * k + c] = acc[c] / n;
        max_change = std::max(max_change, std::abs(next[3 * k + c] - cur[c]));
      }
    }
    for (std::size_t k = 0; k < pixels.size(); ++k) std::copy_n(next.begin() + 3 * k, 3, at(pixels[k][0], pixels[k][1]));
    if (max_change < 0.5) break;
  }

  RgbImage out = request.image;
  for (const auto& p : pixels) {
    const double* s = at(p[0], p[1]);
    for (int c = 0; c < 3; ++c)
      out.at(p[0], p[1], c) = static_cast<std::uint8_t>(std::lround(std::clamp(s[c], 0.0, 255.0)));
  }
  return out;
}

RgbImage histogram_match(const RgbImage& image, const BinaryMask& target_mask,
                         const BinaryMask& reference_mask) {
  require_same_size(image.size(), target_mask.size(), "histogram_match");
  require_same_size(image.size(), reference_mask.size(), "histogram_match");
  const std::size_t n_ref = reference_mask.count();
  if (n_ref == 0) throw ValidationError("histogram_match: empty reference mask");
  RgbImage out = image;
  const int w = image.width();
  const int h = image.height();

  struct Item {
    std::uint8_t value;
    float local_mean;
    int x;
    int y;
  };
  std::vector<Item> items;
  for (int c = 0; c < 3; ++c) {
    std::array<std::size_t, 256> cum{};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (reference_mask.test(x, y)) ++cum[image.at(x, y, c)];
    std::partial_sum(cum.begin(), cum.end(), cum.begin());

    items.clear();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!target_mask.test(x, y)) continue;
        float sum = 0.0f;
        int n = 0;
        for (int j = -1; j <= 1; ++j)
          for (int i = -1; i <= 1; ++i) {
            const int xx = x + i;
            const int yy = y + j;
            if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
            sum += image.at(xx, yy, c);
            ++n;
          }
        items.push_back({image.at(x, y, c), sum / static_cast<float>(n), x, y});
      }
    }
    if (items.empty()) return out;
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
      if (a.value != b.value) return a.value < b.value;
      if (a.local_mean != b.local_mean) return a.local_mean < b.local_mean;
      if (a.y != b.y) return a.y < b.y;
      return a.x < b.x;
    });
    const double scale = static_cast<double>(n_ref) / static_cast<double>(items.size());
    int u = 0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      const double pos = (static_cast<double>(k) + 0.5) * scale;
      while (u < 255 && static_cast<double>(cum[u]) <= pos) ++u;
      out.at(items[k].x, items[k].y, c) = static_cast<std::uint8_t>(u);
    }
  }
  return out;
}

}  // namespace fe
