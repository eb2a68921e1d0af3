#pragma once

#include <cstdint>
#include <vector>

#include "fe/image.hpp"
#include "fe/inpaint.hpp"

namespace fe {

struct PatchMatchParams {
  int patch_size = 7;
  int em_iters = 8;
  int nnf_iters = 5;
  double search_decay = 0.5;
  /// 0 selects 2 * patch_size.
  int min_pyramid_side = 0;
  std::uint64_t seed = 0;

  int radius() const noexcept { return patch_size / 2; }
  int effective_min_side() const noexcept {
    return min_pyramid_side > 0 ? min_pyramid_side : 2 * patch_size;
  }
  /// Throws ValidationError when a field is out of range.
  void validate() const;
};

struct NnfEntry {
  int dx = 0;
  int dy = 0;
  /// Sum of squared RGB differences over the patch.
  double distance = 0.0;
  bool active = false;
};

/// Nearest-neighbour field over an image grid. Only target pixels carry an
/// active entry; the offset points from the target patch centre to its
/// source patch centre.
class NNField {
 public:
  NNField() = default;
  explicit NNField(Size size) : size_(size), entries_(size.area()) {}

  Size size() const noexcept { return size_; }
  NnfEntry& at(int x, int y) noexcept { return entries_[static_cast<std::size_t>(y) * size_.width + x]; }
  const NnfEntry& at(int x, int y) const noexcept {
    return entries_[static_cast<std::size_t>(y) * size_.width + x];
  }
  std::size_t active_count() const noexcept;
  double mean_distance() const noexcept;

 private:
  Size size_;
  std::vector<NnfEntry> entries_;
};

/// Mean active distance after each propagation/search sweep.
struct NnfTrace {
  std::vector<double> mean_distance;
};

/// Source patch centres usable by the search: the whole patch lies inside
/// the image and every pixel of it is known.
BinaryMask valid_sources(const BinaryMask& known, int patch_size);

/// PatchMatch search. Targets whose patch would leave the image are ignored.
/// `init`, when given, is re-clamped to valid sources instead of random
/// initialization. Throws Error when no valid source exists.
NNField nnf_search(const RgbImage& image, const BinaryMask& known, const BinaryMask& targets,
                   const PatchMatchParams& params, const NNField* init = nullptr,
                   NnfTrace* trace = nullptr);

/// Exhaustive search over every valid source; test oracle and benchmark
/// baseline.
NNField nnf_brute_force(const RgbImage& image, const BinaryMask& known, const BinaryMask& targets,
                        int patch_size);

struct PatchMatchOutput {
  RgbImage image;
  /// Finest-level field, distances refreshed against the final image.
  NNField nnf;
  int levels = 0;
};

/// Multiscale completion: masked Gaussian pyramid, onion-peel seed at the
/// coarsest level, then per level em_iters rounds of NNF update and
/// weighted patch voting.
PatchMatchOutput patchmatch_complete(const InpaintRequest& request, const PatchMatchParams& params);

RgbImage patchmatch_inpaint(const InpaintRequest& request, const PatchMatchParams& params);

class PatchMatchBackend final : public InpaintBackend {
 public:
  explicit PatchMatchBackend(PatchMatchParams params);
  std::string name() const override { return "patchmatch"; }
  RgbImage fill(const InpaintRequest& request) const override;
  const PatchMatchParams& params() const noexcept { return params_; }

 private:
  PatchMatchParams params_;
};

}  // namespace fe
