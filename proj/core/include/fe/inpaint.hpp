#pragma once

#include <memory>
#include <string>

#include "fe/image.hpp"

namespace fe {

/// Image plus fill mask (set = pixel to synthesize).
struct InpaintRequest {
  RgbImage image;
  BinaryMask mask;
};

/// Throws ValidationError on mismatched sizes or an all-masked request.
void validate_request(const InpaintRequest& request);

/// A hole-filling algorithm. Implementations must be safe to call
/// concurrently and may assume a validated, non-empty mask.
class InpaintBackend {
 public:
  virtual ~InpaintBackend() = default;
  virtual std::string name() const = 0;
  virtual RgbImage fill(const InpaintRequest& request) const = 0;
};

/// Runs `backend` under the inpaint contract: empty masks short-circuit
/// without calling the backend, and unmasked pixels of the result are the
/// input's, bit for bit. Backend exceptions are rethrown as BackendError.
RgbImage inpaint(const InpaintRequest& request, const InpaintBackend& backend);

/// Jacobi 4-neighbour averaging. The seed interpolates linearly between the
/// known pixels bracketing each hole pixel along its row and column, with
/// onion peeling for pixels bracketed in neither direction. Stops when the
/// largest per-sweep change drops below half an intensity level or after
/// 10 * max(w, h) sweeps.
RgbImage diffusion_fill(const InpaintRequest& request);

class DiffusionBackend final : public InpaintBackend {
 public:
  std::string name() const override { return "diffusion"; }
  RgbImage fill(const InpaintRequest& request) const override { return diffusion_fill(request); }
};

/// Exact per-channel histogram specification: target pixels are ranked by
/// intensity (ties broken by 3x3 local mean, then scan order) and assigned
/// the reference intensity at the same quantile. Pixels outside
/// `target_mask` are untouched. Throws ValidationError on an empty
/// reference.
RgbImage histogram_match(const RgbImage& image, const BinaryMask& target_mask,
                         const BinaryMask& reference_mask);

}  // namespace fe
