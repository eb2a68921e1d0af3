#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "fe/image.hpp"

namespace fe {

// PNG codec backed by libpng's simplified API. Any PNG colour type is
// accepted on read and converted as needed.

RgbImage read_rgb_png(const std::filesystem::path& path);
/// Grayscale decode, threshold >= 128 is set.
BinaryMask read_mask_png(const std::filesystem::path& path);
/// Grayscale decode scaled to [0, 1].
ScalarMap read_gray_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RgbImage& image);
/// Set pixels are written as 255, clear as 0.
void write_png(const std::filesystem::path& path, const BinaryMask& mask);
/// Values are clamped to [0, 1] and quantized to 8 bits.
void write_png(const std::filesystem::path& path, const ScalarMap& map);

std::string encode_png(const RgbImage& image);
std::string encode_png(const BinaryMask& mask);
RgbImage decode_rgb_png(std::string_view bytes);
BinaryMask decode_mask_png(std::string_view bytes);

}  // namespace fe
