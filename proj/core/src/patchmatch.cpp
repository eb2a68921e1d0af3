#include "fe/patchmatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "fe/errors.hpp"

namespace fe {

void PatchMatchParams::validate() const {
  if (patch_size < 3 || patch_size % 2 == 0)
    throw ValidationError("patchmatch: patch_size must be odd and >= 3");
  if (!(search_decay > 0.0 && search_decay < 1.0))
    throw ValidationError("patchmatch: search_decay must lie in (0, 1)");
  if (em_iters < 1 || nnf_iters < 1) throw ValidationError("patchmatch: iteration counts must be >= 1");
  if (min_pyramid_side < 0) throw ValidationError("patchmatch: min_pyramid_side must be >= 0");
}

std::size_t NNField::active_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const NnfEntry& e) { return e.active; }));
}

double NNField::mean_distance() const noexcept {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (!e.active) continue;
    sum += e.distance;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

__extension__ using u128 = unsigned __int128;

// Seeded 64-bit Mersenne Twister with a platform-independent range
// reduction (std distributions are implementation defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  int uniform(int lo, int hi) {
    const u128 span = static_cast<u128>(hi - lo + 1);
    return lo + static_cast<int>((static_cast<u128>(engine_()) * span) >> 64);
  }

 private:
  std::mt19937_64 engine_;
};

struct ColorField {
  int width = 0;
  int height = 0;
  std::vector<float> v;

  ColorField() = default;
  ColorField(int w, int h) : width(w), height(h), v(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  float* px(int x, int y) { return v.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const float* px(int x, int y) const {
    return v.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

ColorField to_field(const RgbImage& image) {
  ColorField f(image.width(), image.height());
  auto bytes = image.bytes();
  for (std::size_t i = 0; i < bytes.size(); ++i) f.v[i] = bytes[i];
  return f;
}

// Summed-area table of a mask, for O(1) box counts.
class BoxCounter {
 public:
  explicit BoxCounter(const BinaryMask& m) : w_(m.width() + 1), sums_(static_cast<std::size_t>(w_) * (m.height() + 1), 0) {
    for (int y = 0; y < m.height(); ++y) {
      int row = 0;
      for (int x = 0; x < m.width(); ++x) {
        row += m.test(x, y) ? 1 : 0;
        sums_[idx(x + 1, y + 1)] = sums_[idx(x + 1, y)] + row;
      }
    }
  }
  // Count over [x0, x1] x [y0, y1], inclusive, coordinates in range.
  int count(int x0, int y0, int x1, int y1) const {
    return sums_[idx(x1 + 1, y1 + 1)] - sums_[idx(x0, y1 + 1)] - sums_[idx(x1 + 1, y0)] + sums_[idx(x0, y0)];
  }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * w_ + x; }
  int w_;
  std::vector<int> sums_;
};

struct Point {
  int x;
  int y;
};

std::vector<Point> active_targets(const BinaryMask& targets, int r) {
  std::vector<Point> out;
  const int w = targets.width();
  const int h = targets.height();
  for (int y = r; y < h - r; ++y)
    for (int x = r; x < w - r; ++x)
      if (targets.test(x, y)) out.push_back({x, y});
  return out;
}

// Propagation / random search over one image. Owns no state beyond
// references; the RNG is shared so that a whole completion draws from one
// seeded sequence in scan order.
class NnfEngine {
 public:
  NnfEngine(const ColorField& image, const BinaryMask& sources, const PatchMatchParams& params, Rng& rng)
      : img_(image), sources_(sources), params_(params), rng_(rng), r_(params.radius()) {
    for (int y = 0; y < sources.height(); ++y)
      for (int x = 0; x < sources.width(); ++x)
        if (sources.test(x, y)) source_list_.push_back({x, y});
    if (source_list_.empty())
      throw InsufficientContextError("patchmatch: the known region admits no complete patch");
  }

  float distance(int tx, int ty, int sx, int sy, float bound) const {
    const int row_len = 3 * params_.patch_size;
    float acc = 0.0f;
    for (int j = -r_; j <= r_; ++j) {
      const float* a = img_.px(tx - r_, ty + j);
      const float* b = img_.px(sx - r_, sy + j);
      for (int k = 0; k < row_len; ++k) {
        const float d = a[k] - b[k];
        acc += d * d;
      }
      if (acc >= bound) return acc;
    }
    return acc;
  }

  bool is_source(int x, int y) const { return sources_.test_clamped(x, y); }

  void initialize(NNField& field, const std::vector<Point>& targets, const NNField* init) {
    constexpr float inf = std::numeric_limits<float>::infinity();
    for (const Point& t : targets) {
      NnfEntry& e = field.at(t.x, t.y);
      bool placed = false;
      if (init && init->size() == field.size() && init->at(t.x, t.y).active) {
        const NnfEntry& seed = init->at(t.x, t.y);
        const int sx = std::clamp(t.x + seed.dx, r_, img_.width - 1 - r_);
        const int sy = std::clamp(t.y + seed.dy, r_, img_.height - 1 - r_);
        if (is_source(sx, sy)) {
          e.dx = sx - t.x;
          e.dy = sy - t.y;
          placed = true;
        }
      }
      if (!placed) {
        const Point s = source_list_[rng_.uniform(0, static_cast<int>(source_list_.size()) - 1)];
        e.dx = s.x - t.x;
        e.dy = s.y - t.y;
      }
      e.active = true;
      e.distance = distance(t.x, t.y, t.x + e.dx, t.y + e.dy, inf);
    }
  }

  void sweep(NNField& field, const std::vector<Point>& targets, bool forward) {
    const int step = forward ? -1 : 1;
    const int max_side = std::max(img_.width, img_.height);
    const std::size_t n = targets.size();
    for (std::size_t k = 0; k < n; ++k) {
      const Point t = targets[forward ? k : n - 1 - k];
      NnfEntry& e = field.at(t.x, t.y);
      float best = static_cast<float>(e.distance);

      // Propagation from the already-visited horizontal and vertical neighbours.
      const Point neighbours[2] = {{t.x + step, t.y}, {t.x, t.y + step}};
      for (const Point& nb : neighbours) {
        if (!field.size().contains(nb.x, nb.y)) continue;
        const NnfEntry& ne = field.at(nb.x, nb.y);
        if (!ne.active || (ne.dx == e.dx && ne.dy == e.dy)) continue;
        const int sx = t.x + ne.dx;
        const int sy = t.y + ne.dy;
        if (!is_source(sx, sy)) continue;
        const float d = distance(t.x, t.y, sx, sy, best);
        if (d < best) {
          best = d;
          e.dx = ne.dx;
          e.dy = ne.dy;
        }
      }

      // Random search in exponentially shrinking windows.
      const int bx = t.x + e.dx;
      const int by = t.y + e.dy;
      for (double radius = max_side; radius >= 1.0; radius *= params_.search_decay) {
        const int rad = static_cast<int>(radius);
        const int sx = std::clamp(bx + rng_.uniform(-rad, rad), r_, img_.width - 1 - r_);
        const int sy = std::clamp(by + rng_.uniform(-rad, rad), r_, img_.height - 1 - r_);
        if (!is_source(sx, sy)) continue;
        const float d = distance(t.x, t.y, sx, sy, best);
        if (d < best) {
          best = d;
          e.dx = sx - t.x;
          e.dy = sy - t.y;
        }
      }
      e.distance = best;
    }
  }

  void run(NNField& field, const std::vector<Point>& targets, const NNField* init, NnfTrace* trace) {
    initialize(field, targets, init);
    for (int i = 0; i < params_.nnf_iters; ++i) {
      sweep(field, targets, i % 2 == 0);
      if (trace) trace->mean_distance.push_back(field.mean_distance());
    }
  }

 private:
  const ColorField& img_;
  const BinaryMask& sources_;
  const PatchMatchParams& params_;
  Rng& rng_;
  int r_;
  std::vector<Point> source_list_;
};

}  // namespace

BinaryMask valid_sources(const BinaryMask& known, int patch_size) {
  const int r = patch_size / 2;
  BinaryMask out(known.size());
  const BoxCounter counter(known);
  const int area = patch_size * patch_size;
  for (int y = r; y < known.height() - r; ++y)
    for (int x = r; x < known.width() - r; ++x)
      if (counter.count(x - r, y - r, x + r, y + r) == area) out.set(x, y);
  return out;
}

NNField nnf_search(const RgbImage& image, const BinaryMask& known, const BinaryMask& targets,
                   const PatchMatchParams& params, const NNField* init, NnfTrace* trace) {
  params.validate();
  require_same_size(image.size(), known.size(), "nnf_search");
  require_same_size(image.size(), targets.size(), "nnf_search");
  const ColorField field = to_field(image);
  const BinaryMask sources = valid_sources(known, params.patch_size);
  Rng rng(params.seed);
  NnfEngine engine(field, sources, params, rng);
  NNField nnf(image.size());
  engine.run(nnf, active_targets(targets, params.radius()), init, trace);
  return nnf;
}

NNField nnf_brute_force(const RgbImage& image, const BinaryMask& known, const BinaryMask& targets,
                        int patch_size) {
  const int r = patch_size / 2;
  const BinaryMask sources = valid_sources(known, patch_size);
  NNField nnf(image.size());
  for (const Point& t : active_targets(targets, r)) {
    NnfEntry best;
    best.distance = std::numeric_limits<double>::infinity();
    for (int sy = 0; sy < image.height(); ++sy) {
      for (int sx = 0; sx < image.width(); ++sx) {
        if (!sources.test(sx, sy)) continue;
        double d = 0.0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i)
            for (int c = 0; c < 3; ++c) {
              const double diff = double(image.at(t.x + i, t.y + j, c)) - image.at(sx + i, sy + j, c);
              d += diff * diff;
            }
        if (d < best.distance) best = {sx - t.x, sy - t.y, d, true};
      }
    }
    if (best.active) nnf.at(t.x, t.y) = best;
  }
  return nnf;
}

namespace {

struct Level {
  ColorField image;
  BinaryMask hole;
};

// Block-aligned 2x decimation with a [1 3 3 1]/8 binomial kernel,
// normalized over known pixels only. A coarse pixel is a hole if any pixel
// of its 2x2 block is.
Level downsample(const Level& fine) {
  const int fw = fine.image.width;
  const int fh = fine.image.height;
  const int cw = (fw + 1) / 2;
  const int ch = (fh + 1) / 2;
  Level coarse{ColorField(cw, ch), BinaryMask(cw, ch)};
  static constexpr float kTaps[4] = {1.0f, 3.0f, 3.0f, 1.0f};
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      bool hole = false;
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i)
          hole = hole || fine.hole.test(std::min(2 * x + i, fw - 1), std::min(2 * y + j, fh - 1));
      coarse.hole.set(x, y, hole);

      float acc[3] = {0.0f, 0.0f, 0.0f};
      float wsum = 0.0f;
      for (int j = 0; j < 4; ++j) {
        const int yy = std::clamp(2 * y - 1 + j, 0, fh - 1);
        for (int i = 0; i < 4; ++i) {
          const int xx = std::clamp(2 * x - 1 + i, 0, fw - 1);
          if (fine.hole.test(xx, yy)) continue;
          const float w = kTaps[i] * kTaps[j];
          const float* p = fine.image.px(xx, yy);
          acc[0] += w * p[0];
          acc[1] += w * p[1];
          acc[2] += w * p[2];
          wsum += w;
        }
      }
      float* o = coarse.image.px(x, y);
      for (int c = 0; c < 3; ++c) o[c] = wsum > 0.0f ? acc[c] / wsum : 0.0f;
    }
  }
  return coarse;
}

void onion_peel(Level& level) {
  const int w = level.image.width;
  const int h = level.image.height;
  BinaryMask filled = mask_complement(level.hole);
  std::vector<Point> front;
  std::vector<float> values;
  for (;;) {
    front.clear();
    values.clear();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (filled.test(x, y)) continue;
        float acc[3] = {0.0f, 0.0f, 0.0f};
        int n = 0;
        for (int j = -1; j <= 1; ++j)
          for (int i = -1; i <= 1; ++i) {
            if ((i || j) && filled.test_clamped(x + i, y + j)) {
              const float* p = level.image.px(x + i, y + j);
              acc[0] += p[0];
              acc[1] += p[1];
              acc[2] += p[2];
              ++n;
            }
          }
        if (n == 0) continue;
        front.push_back({x, y});
        for (float a : acc) values.push_back(a / static_cast<float>(n));
      }
    }
    if (front.empty()) break;
    for (std::size_t k = 0; k < front.size(); ++k) {
      float* p = level.image.px(front[k].x, front[k].y);
      std::copy_n(values.begin() + 3 * k, 3, p);
      filled.set(front[k].x, front[k].y);
    }
  }
}

BinaryMask targets_for(const BinaryMask& hole, int r) {
  BinaryMask out(hole.size());
  const BoxCounter counter(hole);
  for (int y = r; y < hole.height() - r; ++y)
    for (int x = r; x < hole.width() - r; ++x)
      if (counter.count(x - r, y - r, x + r, y + r) > 0) out.set(x, y);
  return out;
}

// Recolours hole pixels as the weighted average of every overlapping
// target patch's source pixel.
void vote(Level& level, const NNField& nnf, const std::vector<Point>& targets, const PatchMatchParams& params) {
  const int r = params.radius();
  const double sigma = 0.5 * params.patch_size * 255.0;
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  const int w = level.image.width;
  std::vector<double> acc(level.image.v.size(), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(w) * level.image.height, 0.0);
  for (const Point& t : targets) {
    const NnfEntry& e = nnf.at(t.x, t.y);
    const double weight = std::exp(-e.distance * inv_two_sigma_sq);
    for (int j = -r; j <= r; ++j) {
      for (int i = -r; i <= r; ++i) {
        const int x = t.x + i;
        const int y = t.y + j;
        if (!level.hole.test(x, y)) continue;
        const float* s = level.image.px(x + e.dx, y + e.dy);
        const std::size_t k = static_cast<std::size_t>(y) * w + x;
        acc[3 * k + 0] += weight * s[0];
        acc[3 * k + 1] += weight * s[1];
        acc[3 * k + 2] += weight * s[2];
        wsum[k] += weight;
      }
    }
  }
  for (std::size_t k = 0; k < wsum.size(); ++k) {
    if (wsum[k] <= 0.0) continue;
    for (int c = 0; c < 3; ++c) level.image.v[3 * k + c] = static_cast<float>(acc[3 * k + c] / wsum[k]);
  }
}

// Bilinear upsample of the coarse result into the fine level's hole.
void upsample_hole(const Level& coarse, Level& fine) {
  const int cw = coarse.image.width;
  const int ch = coarse.image.height;
  for (int y = 0; y < fine.image.height; ++y) {
    for (int x = 0; x < fine.image.width; ++x) {
      if (!fine.hole.test(x, y)) continue;
      const double cx = std::clamp((x - 0.5) / 2.0, 0.0, cw - 1.0);
      const double cy = std::clamp((y - 0.5) / 2.0, 0.0, ch - 1.0);
      const int x0 = static_cast<int>(cx);
      const int y0 = static_cast<int>(cy);
      const int x1 = std::min(x0 + 1, cw - 1);
      const int y1 = std::min(y0 + 1, ch - 1);
      const double fx = cx - x0;
      const double fy = cy - y0;
      float* o = fine.image.px(x, y);
      for (int c = 0; c < 3; ++c) {
        const double top = coarse.image.px(x0, y0)[c] * (1 - fx) + coarse.image.px(x1, y0)[c] * fx;
        const double bottom = coarse.image.px(x0, y1)[c] * (1 - fx) + coarse.image.px(x1, y1)[c] * fx;
        o[c] = static_cast<float>(top * (1 - fy) + bottom * fy);
      }
    }
  }
}

NNField upsample_field(const NNField& coarse, Size fine_size) {
  NNField out(fine_size);
  const Size cs = coarse.size();
  for (int y = 0; y < fine_size.height; ++y) {
    for (int x = 0; x < fine_size.width; ++x) {
      const NnfEntry& e = coarse.at(std::min(x / 2, cs.width - 1), std::min(y / 2, cs.height - 1));
      if (!e.active) continue;
      NnfEntry& f = out.at(x, y);
      f.dx = 2 * e.dx;
      f.dy = 2 * e.dy;
      f.active = true;
    }
  }
  return out;
}

}  // namespace

PatchMatchOutput patchmatch_complete(const InpaintRequest& request, const PatchMatchParams& params) {
  params.validate();
  validate_request(request);
  const int r = params.radius();

  std::vector<Level> pyramid;
  pyramid.push_back({to_field(request.image), request.mask});
  if (valid_sources(mask_complement(request.mask), params.patch_size).none())
    throw InsufficientContextError("patchmatch: the known region admits no complete patch");
  for (;;) {
    const Level& top = pyramid.back();
    const int cw = (top.image.width + 1) / 2;
    const int ch = (top.image.height + 1) / 2;
    if (std::min(cw, ch) < params.effective_min_side()) break;
    Level next = downsample(top);
    if (valid_sources(mask_complement(next.hole), params.patch_size).none()) break;
    pyramid.push_back(std::move(next));
  }

  Rng rng(params.seed);
  PatchMatchOutput out;
  out.levels = static_cast<int>(pyramid.size());
  NNField nnf;
  for (int li = out.levels - 1; li >= 0; --li) {
    Level& level = pyramid[li];
    const Size size{level.image.width, level.image.height};
    if (li == out.levels - 1) {
      onion_peel(level);
    } else {
      upsample_hole(pyramid[li + 1], level);
      nnf = upsample_field(nnf, size);
    }
    const BinaryMask sources = valid_sources(mask_complement(level.hole), params.patch_size);
    const std::vector<Point> targets = active_targets(targets_for(level.hole, r), r);
    NnfEngine engine(level.image, sources, params, rng);
    NNField current(size);
    for (int it = 0; it < params.em_iters; ++it) {
      const NNField* seed = (it == 0 && li == out.levels - 1) ? nullptr : &nnf;
      engine.run(current, targets, seed, nullptr);
      vote(level, current, targets, params);
      nnf = current;
    }
    if (li == 0) {
      for (const Point& t : targets) {
        NnfEntry& e = nnf.at(t.x, t.y);
        e.distance = engine.distance(t.x, t.y, t.x + e.dx, t.y + e.dy, std::numeric_limits<float>::infinity());
      }
    }
  }

  out.image = request.image;
  const ColorField& result = pyramid.front().image;
  for (int y = 0; y < request.image.height(); ++y) {
    for (int x = 0; x < request.image.width(); ++x) {
      if (!request.mask.test(x, y)) continue;
      const float* p = result.px(x, y);
      for (int c = 0; c < 3; ++c)
        out.image.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(p[c], 0.0f, 255.0f)));
    }
  }
  out.nnf = std::move(nnf);
  return out;
}

RgbImage patchmatch_inpaint(const InpaintRequest& request, const PatchMatchParams& params) {
  if (request.mask.none()) {
    validate_request(request);
    return request.image;
  }
  return patchmatch_complete(request, params).image;
}

PatchMatchBackend::PatchMatchBackend(PatchMatchParams params) : params_(params) { params_.validate(); }

RgbImage PatchMatchBackend::fill(const InpaintRequest& request) const {
  return patchmatch_inpaint(request, params_);
}

}  // namespace fe
