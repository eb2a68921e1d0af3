#include "fe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <set>

#include "fe/errors.hpp"
#include "fe/external.hpp"
#include "fe/patchmatch.hpp"
#include "fe/png_io.hpp"

namespace fe {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Rethrows the in-flight exception with `context` prepended, keeping the
// category the CLI uses for exit codes.
[[noreturn]] void rethrow_with(const std::string& context) {
  try {
    throw;
  } catch (const BackendError& e) {
    throw BackendError(e.backend(), context + ": " + e.what());
  } catch (const InsufficientContextError& e) {
    throw InsufficientContextError(context + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(context + ": " + e.what());
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("pipeline config must be a JSON object");
  PipelineConfig c;
  try {
    if (j.contains("backend")) c.backend = j.at("backend");
    c.target_long_side = j.value("target_long_side", c.target_long_side);
    c.mask_dilation_px = j.value("mask_dilation_px", c.mask_dilation_px);
    c.feather_px = j.value("feather_px", c.feather_px);
    c.histogram_match = j.value("histogram_match", c.histogram_match);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing config file: " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
}

json PipelineConfig::to_json() const {
  return {{"backend", backend},
          {"target_long_side", target_long_side},
          {"mask_dilation_px", mask_dilation_px},
          {"feather_px", feather_px},
          {"histogram_match", histogram_match},
          {"seed", seed}};
}

void PipelineConfig::validate() const {
  if (target_long_side < 32) throw ValidationError("target_long_side must be >= 32");
  if (mask_dilation_px < 0) throw ValidationError("mask_dilation_px must be >= 0");
  if (feather_px < 0) throw ValidationError("feather_px must be >= 0");
  make_backend(backend, seed);
}

std::unique_ptr<InpaintBackend> make_backend(const json& backend, std::uint64_t seed) {
  if (!backend.is_object()) throw ValidationError("backend must be a JSON object");
  const std::string kind = backend.value("kind", std::string());
  if (kind == "patchmatch") {
    PatchMatchParams p;
    try {
      p.patch_size = backend.value("patch_size", p.patch_size);
      p.em_iters = backend.value("em_iters", p.em_iters);
      p.nnf_iters = backend.value("nnf_iters", p.nnf_iters);
      p.search_decay = backend.value("search_decay", p.search_decay);
      p.min_pyramid_side = backend.value("min_pyramid_side", p.min_pyramid_side);
      p.seed = backend.value("seed", seed);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("patchmatch backend: ") + e.what());
    }
    return std::make_unique<PatchMatchBackend>(p);
  }
  if (kind == "diffusion") return std::make_unique<DiffusionBackend>();
  if (kind == "command" || kind == "http") return std::make_unique<ExternalBackend>(AdapterConfig::from_json(backend));
  throw ValidationError("unknown backend kind \"" + kind + "\"");
}

BinaryMask build_inpaint_mask(const std::vector<InstanceMask>& instances, const Selection& selection,
                              int dilation_px, Size image_size) {
  if (dilation_px < 0) throw ValidationError("dilation must be >= 0");
  BinaryMask mask(image_size);
  auto add = [&](const InstanceMask& inst) {
    require_same_size(inst.mask.size(), image_size, ("instance '" + inst.id + "'").c_str());
    mask = mask_union(mask, inst.mask);
  };
  if (selection.all) {
    for (const auto& inst : instances) add(inst);
  } else {
    for (const auto& id : selection.ids) {
      auto it = std::find_if(instances.begin(), instances.end(), [&](const InstanceMask& m) { return m.id == id; });
      if (it == instances.end()) throw ValidationError("unknown instance id '" + id + "'");
      add(*it);
    }
  }
  return dilate_disk(mask, dilation_px);
}

StageTimings& StageTimings::operator+=(const StageTimings& o) {
  rectify_ms += o.rectify_ms;
  backend_ms += o.backend_ms;
  unrectify_ms += o.unrectify_ms;
  composite_ms += o.composite_ms;
  final_pass_ms += o.final_pass_ms;
  total_ms += o.total_ms;
  return *this;
}

json StageTimings::to_json() const {
  return {{"rectify_ms", rectify_ms},     {"backend_ms", backend_ms},       {"unrectify_ms", unrectify_ms},
          {"composite_ms", composite_ms}, {"final_pass_ms", final_pass_ms}, {"total_ms", total_ms}};
}

PlaneInpaintResult inpaint_plane(const SceneBundle& bundle, const Plane& plane, const BinaryMask& inpaint_mask,
                                 const BinaryMask& claim, const PipelineConfig& config,
                                 const InpaintBackend& backend) {
  PlaneInpaintResult r;
  r.plane_id = plane.id;
  r.claim = claim;
  if (claim.none()) {
    r.skipped = true;
    r.skip_reason = "empty claim";
    return r;
  }
  const auto t0 = Clock::now();
  r.frame = compute_rectification(plane, bundle.intrinsics, config.target_long_side);
  const Size rect = r.frame.rect_size();
  const BinaryMask known = mask_difference(plane.support_mask, inpaint_mask);
  // Only pixels interpolated purely from known pixels count as known, so
  // nothing under the mask bleeds into the context.
  const BinaryMask rect_known = warp_mask(known, r.frame.orig_to_rect, rect, 1.0);
  r.rectified_mask = mask_complement(rect_known);
  r.rectified_input = warp_image(bundle.image, r.frame.orig_to_rect, rect).image;
  r.timings.rectify_ms = ms_since(t0);
  if (rect_known.none()) {
    r.skipped = true;
    r.skip_reason = "no known pixels on the plane";
    return r;
  }

  const auto t1 = Clock::now();
  r.rectified_output = inpaint({r.rectified_input, r.rectified_mask}, backend);
  if (config.histogram_match) r.rectified_output = histogram_match(r.rectified_output, r.rectified_mask, rect_known);
  r.timings.backend_ms = ms_since(t1);

  const auto t2 = Clock::now();
  r.unrectified_patch = warp_image(r.rectified_output, r.frame.orig_to_rect.inverse(), bundle.image.size()).image;
  r.timings.unrectify_ms = ms_since(t2);
  r.timings.total_ms = ms_since(t0);
  return r;
}

RgbImage composite(const RgbImage& base, const std::vector<PlaneInpaintResult>& results, int feather_px,
                   const BinaryMask* known, const BinaryMask* blendable) {
  const Size size = base.size();
  BinaryMask claimed(size);
  for (const auto& r : results) {
    if (r.skipped) continue;
    require_same_size(r.claim.size(), size, "composite claim");
    require_same_size(r.unrectified_patch.size(), size, "composite patch");
    if (!masks_disjoint(claimed, r.claim))
      throw ValidationError("composite: claim of plane '" + r.plane_id + "' overlaps another claim");
    claimed = mask_union(claimed, r.claim);
  }
  const BinaryMask fallback = mask_complement(claimed);
  const BinaryMask& anchor = known ? *known : fallback;
  require_same_size(anchor.size(), size, "composite known mask");
  if (blendable) require_same_size(blendable->size(), size, "composite blendable mask");

  // Chessboard distance to the nearest known pixel, capped past the feather.
  const int cap = feather_px + 1;
  std::vector<int> dist(size.area(), cap);
  auto d = [&](int x, int y) -> int& { return dist[static_cast<std::size_t>(y) * size.width + x]; };
  if (feather_px > 0) {
    for (int y = 0; y < size.height; ++y)
      for (int x = 0; x < size.width; ++x)
        if (anchor.test(x, y)) d(x, y) = 0;
    for (int y = 0; y < size.height; ++y)
      for (int x = 0; x < size.width; ++x) {
        int& v = d(x, y);
        if (x > 0) v = std::min(v, d(x - 1, y) + 1);
        if (y > 0) {
          v = std::min(v, d(x, y - 1) + 1);
          if (x > 0) v = std::min(v, d(x - 1, y - 1) + 1);
          if (x + 1 < size.width) v = std::min(v, d(x + 1, y - 1) + 1);
        }
      }
    for (int y = size.height - 1; y >= 0; --y)
      for (int x = size.width - 1; x >= 0; --x) {
        int& v = d(x, y);
        if (x + 1 < size.width) v = std::min(v, d(x + 1, y) + 1);
        if (y + 1 < size.height) {
          v = std::min(v, d(x, y + 1) + 1);
          if (x + 1 < size.width) v = std::min(v, d(x + 1, y + 1) + 1);
          if (x > 0) v = std::min(v, d(x - 1, y + 1) + 1);
        }
      }
  }

  RgbImage out = base;
  for (const auto& r : results) {
    if (r.skipped) continue;
    for (int y = 0; y < size.height; ++y) {
      for (int x = 0; x < size.width; ++x) {
        if (!r.claim.test(x, y)) continue;
        const int k = d(x, y);
        if (k >= cap || (blendable && !blendable->test(x, y))) {
          out.set(x, y, r.unrectified_patch.rgb(x, y));
          continue;
        }
        const double alpha = static_cast<double>(k) / cap;
        const auto* p = r.unrectified_patch.pixel(x, y);
        const auto* b = base.pixel(x, y);
        auto* o = out.pixel(x, y);
        for (int c = 0; c < 3; ++c)
          o[c] = static_cast<std::uint8_t>(std::lround(alpha * p[c] + (1.0 - alpha) * b[c]));
      }
    }
  }
  return out;
}

namespace {

void dump_plane(const std::filesystem::path& dir, const PlaneInpaintResult& r) {
  const auto base = dir / ("plane_" + r.plane_id);
  std::filesystem::create_directories(base);
  write_png(base / "claim.png", r.claim);
  if (r.rectified_input.empty()) return;
  write_png(base / "rectified_input.png", r.rectified_input);
  write_png(base / "rectified_mask.png", r.rectified_mask);
  if (r.rectified_output.empty()) return;
  write_png(base / "rectified_output.png", r.rectified_output);
  write_png(base / "unrectified_patch.png", r.unrectified_patch);
  std::ofstream h(base / "homography.json");
  json m = json::array();
  for (int i = 0; i < 3; ++i) m.push_back({r.frame.orig_to_rect(i, 0), r.frame.orig_to_rect(i, 1), r.frame.orig_to_rect(i, 2)});
  h << json{{"plane_id", r.plane_id},
            {"h_orig_to_rect", m},
            {"rect_width", r.frame.rect_width},
            {"rect_height", r.frame.rect_height},
            {"pixels_per_meter", r.frame.pixels_per_meter}}
           .dump(2);
}

}  // namespace

PipelineResult erase(const SceneBundle& bundle, const Selection& selection, const PipelineConfig& config,
                     const InpaintBackend& backend, const std::optional<std::filesystem::path>& dump_dir) {
  config.validate();
  const auto t_start = Clock::now();
  PipelineResult result;
  result.inpaint_mask =
      build_inpaint_mask(bundle.instances, selection, config.mask_dilation_px, bundle.image.size());
  result.final_image = bundle.image;
  result.residual_mask = BinaryMask(bundle.image.size());
  if (result.inpaint_mask.none()) {
    result.timings.total_ms = ms_since(t_start);
    return result;
  }

  const PlaneAssignment assignment = assign_masked_pixels(bundle, result.inpaint_mask);
  result.residual_mask = assignment.residual;

  // Planes are independent; fan out and join before compositing.
  std::vector<std::future<PlaneInpaintResult>> jobs;
  for (std::size_t i = 0; i < bundle.planes.size(); ++i) {
    const Plane& plane = bundle.planes[i];
    const BinaryMask& claim = assignment.claims[i].second;
    if (claim.none()) {
      PlaneInpaintResult skipped;
      skipped.plane_id = plane.id;
      skipped.claim = claim;
      skipped.skipped = true;
      skipped.skip_reason = "empty claim";
      std::promise<PlaneInpaintResult> ready;
      ready.set_value(std::move(skipped));
      jobs.push_back(ready.get_future());
      continue;
    }
    jobs.push_back(std::async(std::launch::async, [&, i]() -> PlaneInpaintResult {
      const Plane& p = bundle.planes[i];
      try {
        return inpaint_plane(bundle, p, result.inpaint_mask, assignment.claims[i].second, config, backend);
      } catch (const InsufficientContextError& e) {
        PlaneInpaintResult r;
        r.plane_id = p.id;
        r.claim = assignment.claims[i].second;
        r.skipped = true;
        r.skip_reason = e.what();
        return r;
      } catch (...) {
        rethrow_with("erase: stage plane-inpaint (plane '" + p.id + "')");
      }
    }));
  }
  for (auto& job : jobs) {
    PlaneInpaintResult r = job.get();
    if (r.skipped && !r.claim.none()) {
      // No usable context on this plane: its pixels join the final pass.
      result.warnings.push_back("plane '" + r.plane_id + "' skipped: " + r.skip_reason);
      result.residual_mask = mask_union(result.residual_mask, r.claim);
    }
    if (!r.skipped) ++result.backend_calls;
    result.timings.rectify_ms += r.timings.rectify_ms;
    result.timings.backend_ms += r.timings.backend_ms;
    result.timings.unrectify_ms += r.timings.unrectify_ms;
    result.per_plane.push_back(std::move(r));
  }
  if (dump_dir)
    for (const auto& r : result.per_plane) dump_plane(*dump_dir, r);

  const auto t_comp = Clock::now();
  const BinaryMask known = mask_complement(result.inpaint_mask);
  // Only the dilation ring shows background in the input; the objects
  // themselves must not bleed into the feather.
  const BinaryMask blendable =
      mask_difference(result.inpaint_mask, build_inpaint_mask(bundle.instances, selection, 0, bundle.image.size()));
  RgbImage composed;
  try {
    composed = composite(bundle.image, result.per_plane, config.feather_px, &known, &blendable);
  } catch (...) {
    rethrow_with("erase: stage composite");
  }
  result.timings.composite_ms = ms_since(t_comp);

  if (!result.residual_mask.none()) {
    const auto t_final = Clock::now();
    try {
      composed = inpaint({composed, result.residual_mask}, backend);
    } catch (...) {
      rethrow_with("erase: stage final-pass");
    }
    result.final_pass_ran = true;
    ++result.backend_calls;
    result.timings.final_pass_ms = ms_since(t_final);
  }
  // Pixels outside the inpaint mask are the input's.
  copy_masked(bundle.image, known, composed);
  result.final_image = std::move(composed);
  if (dump_dir) {
    write_png(*dump_dir / "inpaint_mask.png", result.inpaint_mask);
    write_png(*dump_dir / "residual_mask.png", result.residual_mask);
    write_png(*dump_dir / "final.png", result.final_image);
  }
  result.timings.total_ms = ms_since(t_start);
  return result;
}

PipelineResult erase(const SceneBundle& bundle, const Selection& selection, const PipelineConfig& config,
                     const std::optional<std::filesystem::path>& dump_dir) {
  const auto backend = make_backend(config.backend, config.seed);
  return erase(bundle, selection, config, *backend, dump_dir);
}

}  // namespace fe
