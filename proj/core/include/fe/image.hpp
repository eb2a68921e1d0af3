#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fe {

struct Size {
  int width = 0;
  int height = 0;

  std::size_t area() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  bool operator==(const Size&) const = default;
};

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB bitmap, row-major.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {0, 0, 0});
  explicit RgbImage(Size size, Rgb fill = {0, 0, 0}) : RgbImage(size.width, size.height, fill) {}

  int width() const noexcept { return size_.width; }
  int height() const noexcept { return size_.height; }
  Size size() const noexcept { return size_; }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t* pixel(int x, int y) noexcept { return data_.data() + offset(x, y); }
  const std::uint8_t* pixel(int x, int y) const noexcept { return data_.data() + offset(x, y); }
  std::uint8_t& at(int x, int y, int c) noexcept { return data_[offset(x, y) + c]; }
  std::uint8_t at(int x, int y, int c) const noexcept { return data_[offset(x, y) + c]; }
  Rgb rgb(int x, int y) const noexcept {
    const auto* p = pixel(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb v) noexcept {
    auto* p = pixel(x, y);
    p[0] = v[0];
    p[1] = v[1];
    p[2] = v[2];
  }

  std::span<std::uint8_t> bytes() noexcept { return data_; }
  std::span<const std::uint8_t> bytes() const noexcept { return data_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * size_.width + x) * 3;
  }

  Size size_;
  std::vector<std::uint8_t> data_;
};

/// Per-pixel boolean bitmap. Stored one byte per pixel (0 or 1).
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false);
  explicit BinaryMask(Size size, bool fill = false) : BinaryMask(size.width, size.height, fill) {}

  int width() const noexcept { return size_.width; }
  int height() const noexcept { return size_.height; }
  Size size() const noexcept { return size_; }

  bool test(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
  /// Out-of-bounds reads return false.
  bool test_clamped(int x, int y) const noexcept { return size_.contains(x, y) && test(x, y); }
  void set(int x, int y, bool v = true) noexcept { bits_[index(x, y)] = v ? 1 : 0; }

  std::size_t count() const noexcept;
  bool none() const noexcept { return count() == 0; }
  bool all() const noexcept { return count() == size_.area(); }

  std::span<std::uint8_t> bits() noexcept { return bits_; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * size_.width + x;
  }

  Size size_;
  std::vector<std::uint8_t> bits_;
};

/// Single-channel floating point map (edge probabilities, grayscale).
class ScalarMap {
 public:
  ScalarMap() = default;
  ScalarMap(int width, int height, double fill = 0.0)
      : size_{width, height}, values_(size_.area(), fill) {}
  explicit ScalarMap(Size size, double fill = 0.0) : ScalarMap(size.width, size.height, fill) {}

  int width() const noexcept { return size_.width; }
  int height() const noexcept { return size_.height; }
  Size size() const noexcept { return size_; }

  double& at(int x, int y) noexcept { return values_[static_cast<std::size_t>(y) * size_.width + x]; }
  double at(int x, int y) const noexcept {
    return values_[static_cast<std::size_t>(y) * size_.width + x];
  }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  Size size_;
  std::vector<double> values_;
};

// Mask algebra. All binary operations require equal sizes and throw
// ValidationError otherwise.
BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_difference(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_complement(const BinaryMask& m);
bool mask_is_subset(const BinaryMask& sub, const BinaryMask& super);
bool masks_disjoint(const BinaryMask& a, const BinaryMask& b);

/// Morphological dilation by a disk of the given radius (x^2 + y^2 <= r^2).
BinaryMask dilate_disk(const BinaryMask& m, int radius);

/// City-block erosion by one pixel: a pixel survives if it and its four
/// neighbours are set. Out-of-bounds neighbours count as set.
BinaryMask erode_once(const BinaryMask& m);

/// Copies `src` into `dst` wherever `mask` is set.
void copy_masked(const RgbImage& src, const BinaryMask& mask, RgbImage& dst);

/// ITU-R 601 luma in [0, 255].
ScalarMap to_grayscale(const RgbImage& image);

void require_same_size(Size a, Size b, const char* what);

}  // namespace fe
