#include "fe/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "fe/errors.hpp"

namespace fe {
namespace {

struct Decoded {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

class PngImage {
 public:
  PngImage() {
    std::memset(&image_, 0, sizeof(image_));
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;

  png_image* get() { return &image_; }
  png_image& operator*() { return image_; }

 private:
  png_image image_;
};

Decoded decode(std::string_view bytes, png_uint_32 format, const std::string& origin) {
  PngImage img;
  if (!png_image_begin_read_from_memory(img.get(), bytes.data(), bytes.size())) {
    throw Error("png decode failed for " + origin + ": " + (*img).message);
  }
  (*img).format = format;
  Decoded out;
  out.width = static_cast<int>((*img).width);
  out.height = static_cast<int>((*img).height);
  out.pixels.resize(PNG_IMAGE_SIZE(*img));
  if (!png_image_finish_read(img.get(), nullptr, out.pixels.data(), 0, nullptr)) {
    throw Error("png decode failed for " + origin + ": " + (*img).message);
  }
  return out;
}

std::string encode(const std::uint8_t* pixels, int width, int height, png_uint_32 format) {
  PngImage img;
  (*img).width = static_cast<png_uint_32>(width);
  (*img).height = static_cast<png_uint_32>(height);
  (*img).format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(img.get(), nullptr, &size, 0, pixels, 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + (*img).message);
  }
  std::string buffer(size, '\0');
  if (!png_image_write_to_memory(img.get(), buffer.data(), &size, 0, pixels, 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + (*img).message);
  }
  buffer.resize(size);
  return buffer;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

RgbImage to_rgb(const Decoded& d) {
  RgbImage out(d.width, d.height);
  std::copy(d.pixels.begin(), d.pixels.end(), out.bytes().begin());
  return out;
}

BinaryMask to_mask(const Decoded& d) {
  BinaryMask out(d.width, d.height);
  auto bits = out.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = d.pixels[i] >= 128 ? 1 : 0;
  return out;
}

std::string encode_mask(const BinaryMask& mask) {
  std::vector<std::uint8_t> gray(mask.size().area());
  auto bits = mask.bits();
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = bits[i] ? 255 : 0;
  return encode(gray.data(), mask.width(), mask.height(), PNG_FORMAT_GRAY);
}

}  // namespace

RgbImage read_rgb_png(const std::filesystem::path& path) {
  return to_rgb(decode(slurp(path), PNG_FORMAT_RGB, path.string()));
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  return to_mask(decode(slurp(path), PNG_FORMAT_GRAY, path.string()));
}

ScalarMap read_gray_png(const std::filesystem::path& path) {
  const Decoded d = decode(slurp(path), PNG_FORMAT_GRAY, path.string());
  ScalarMap out(d.width, d.height);
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = d.pixels[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  spit(path, encode_png(image));
}

void write_png(const std::filesystem::path& path, const BinaryMask& mask) {
  spit(path, encode_mask(mask));
}

void write_png(const std::filesystem::path& path, const ScalarMap& map) {
  std::vector<std::uint8_t> gray(map.size().area());
  auto v = map.values();
  for (std::size_t i = 0; i < gray.size(); ++i)
    gray[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  spit(path, encode(gray.data(), map.width(), map.height(), PNG_FORMAT_GRAY));
}

std::string encode_png(const RgbImage& image) {
  return encode(image.bytes().data(), image.width(), image.height(), PNG_FORMAT_RGB);
}

std::string encode_png(const BinaryMask& mask) { return encode_mask(mask); }

RgbImage decode_rgb_png(std::string_view bytes) {
  return to_rgb(decode(bytes, PNG_FORMAT_RGB, "<memory>"));
}

BinaryMask decode_mask_png(std::string_view bytes) {
  return to_mask(decode(bytes, PNG_FORMAT_GRAY, "<memory>"));
}

}  // namespace fe
