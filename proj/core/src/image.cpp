#include "fe/image.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "fe/errors.hpp"

namespace fe {

RgbImage::RgbImage(int width, int height, Rgb fill)
    : size_{width, height}, data_(size_.area() * 3) {
  for (std::size_t i = 0; i < size_.area(); ++i) {
    data_[3 * i + 0] = fill[0];
    data_[3 * i + 1] = fill[1];
    data_[3 * i + 2] = fill[2];
  }
}

BinaryMask::BinaryMask(int width, int height, bool fill)
    : size_{width, height}, bits_(size_.area(), fill ? 1 : 0) {}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void require_same_size(Size a, Size b, const char* what) {
  if (a != b) {
    throw ValidationError(std::string(what) + ": size mismatch (" + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
  }
}

namespace {

template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, const char* what, Op op) {
  require_same_size(a.size(), b.size(), what);
  BinaryMask out(a.size());
  auto o = out.bits();
  auto x = a.bits();
  auto y = b.bits();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = op(x[i] != 0, y[i] != 0) ? 1 : 0;
  return out;
}

}  // namespace

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, "mask_union", [](bool p, bool q) { return p || q; });
}

BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, "mask_intersection", [](bool p, bool q) { return p && q; });
}

BinaryMask mask_difference(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, "mask_difference", [](bool p, bool q) { return p && !q; });
}

BinaryMask mask_complement(const BinaryMask& m) {
  BinaryMask out(m.size());
  auto o = out.bits();
  auto in = m.bits();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] ? 0 : 1;
  return out;
}

bool mask_is_subset(const BinaryMask& sub, const BinaryMask& super) {
  require_same_size(sub.size(), super.size(), "mask_is_subset");
  auto a = sub.bits();
  auto b = super.bits();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

bool masks_disjoint(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a.size(), b.size(), "masks_disjoint");
  auto x = a.bits();
  auto y = b.bits();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] && y[i]) return false;
  return true;
}

BinaryMask dilate_disk(const BinaryMask& m, int radius) {
  if (radius <= 0) return m;
  // Row half-widths of the disk.
  std::vector<int> half(radius + 1);
  for (int dy = 0; dy <= radius; ++dy) {
    int w = 0;
    while ((w + 1) * (w + 1) + dy * dy <= radius * radius) ++w;
    half[dy] = w;
  }
  const int W = m.width();
  const int H = m.height();
  BinaryMask out(m.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!m.test(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= H) continue;
        const int hw = half[std::abs(dy)];
        const int x0 = std::max(0, x - hw);
        const int x1 = std::min(W - 1, x + hw);
        for (int xx = x0; xx <= x1; ++xx) out.set(xx, yy);
      }
    }
  }
  return out;
}

BinaryMask erode_once(const BinaryMask& m) {
  BinaryMask out(m.size());
  const Size s = m.size();
  auto get = [&](int x, int y) { return !s.contains(x, y) || m.test(x, y); };
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (m.test(x, y) && get(x - 1, y) && get(x + 1, y) && get(x, y - 1) && get(x, y + 1))
        out.set(x, y);
  return out;
}

void copy_masked(const RgbImage& src, const BinaryMask& mask, RgbImage& dst) {
  require_same_size(src.size(), mask.size(), "copy_masked");
  require_same_size(src.size(), dst.size(), "copy_masked");
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x)
      if (mask.test(x, y)) dst.set(x, y, src.rgb(x, y));
}

ScalarMap to_grayscale(const RgbImage& image) {
  ScalarMap out(image.size());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto* p = image.pixel(x, y);
      out.at(x, y) = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

}  // namespace fe
