#include "fe/app/outline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace fe::app {

namespace {

struct Edge {
  int x0, y0, x1, y1;
  bool used = false;
};

std::int64_t key(int x, int y) { return (static_cast<std::int64_t>(y) << 32) | static_cast<std::uint32_t>(x); }

// Direction index 0..3 for right, down, left, up in image coordinates.
int direction(const Edge& e) {
  if (e.x1 > e.x0) return 0;
  if (e.y1 > e.y0) return 1;
  if (e.x1 < e.x0) return 2;
  return 3;
}

double distance_to_segment(const Point& p, const Point& a, const Point& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

void simplify_open(const Polygon& pts, std::size_t lo, std::size_t hi, double tol, std::vector<bool>& keep) {
  if (hi <= lo + 1) return;
  double best = -1.0;
  std::size_t idx = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double d = distance_to_segment(pts[i], pts[lo], pts[hi]);
    if (d > best) {
      best = d;
      idx = i;
    }
  }
  if (best > tol) {
    keep[idx] = true;
    simplify_open(pts, lo, idx, tol, keep);
    simplify_open(pts, idx, hi, tol, keep);
  }
}

}  // namespace

BoundingBox bounding_box(const BinaryMask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.test(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return {};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

double polygon_area(const Polygon& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

std::vector<Polygon> trace_outlines(const BinaryMask& mask) {
  std::vector<Edge> edges;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.test(x, y)) continue;
      if (!mask.test_clamped(x, y - 1)) edges.push_back({x, y, x + 1, y});
      if (!mask.test_clamped(x + 1, y)) edges.push_back({x + 1, y, x + 1, y + 1});
      if (!mask.test_clamped(x, y + 1)) edges.push_back({x + 1, y + 1, x, y + 1});
      if (!mask.test_clamped(x - 1, y)) edges.push_back({x, y + 1, x, y});
    }
  }
  std::unordered_map<std::int64_t, std::vector<std::size_t>> outgoing;
  for (std::size_t i = 0; i < edges.size(); ++i) outgoing[key(edges[i].x0, edges[i].y0)].push_back(i);

  std::vector<Polygon> loops;
  for (std::size_t start = 0; start < edges.size(); ++start) {
    if (edges[start].used) continue;
    Polygon ring;
    std::size_t cur = start;
    for (;;) {
      Edge& e = edges[cur];
      e.used = true;
      ring.push_back({static_cast<double>(e.x0), static_cast<double>(e.y0)});
      const auto& next = outgoing[key(e.x1, e.y1)];
      const int dir = direction(e);
      std::size_t pick = edges.size();
      int best_turn = 4;
      // At a pinch vertex prefer the sharpest clockwise turn so diagonal
      // neighbours stay separate pieces.
      for (std::size_t cand : next) {
        if (edges[cand].used && cand != start) continue;
        const int turn = (direction(edges[cand]) - dir + 4) % 4;
        const int rank = turn == 1 ? 0 : turn == 0 ? 1 : turn == 3 ? 2 : 3;
        if (rank < best_turn) {
          best_turn = rank;
          pick = cand;
        }
      }
      if (pick == edges.size() || pick == start) break;
      cur = pick;
    }
    // Drop collinear vertices.
    Polygon clean;
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const Point& p = ring[(i + ring.size() - 1) % ring.size()];
      const Point& q = ring[i];
      const Point& r = ring[(i + 1) % ring.size()];
      if ((q.x - p.x) * (r.y - q.y) - (q.y - p.y) * (r.x - q.x) != 0.0) clean.push_back(q);
    }
    if (clean.size() >= 3 && polygon_area(clean) > 0.0) loops.push_back(std::move(clean));
  }
  std::sort(loops.begin(), loops.end(),
            [](const Polygon& a, const Polygon& b) { return polygon_area(a) > polygon_area(b); });
  return loops;
}

Polygon simplify_closed(const Polygon& ring, double tolerance) {
  if (ring.size() <= 4) return ring;
  std::size_t far = 0;
  double best = -1.0;
  for (std::size_t i = 1; i < ring.size(); ++i) {
    const double d = std::hypot(ring[i].x - ring[0].x, ring[i].y - ring[0].y);
    if (d > best) {
      best = d;
      far = i;
    }
  }
  Polygon open(ring.begin(), ring.end());
  open.push_back(ring[0]);
  std::vector<bool> keep(open.size(), false);
  keep[0] = keep[far] = keep.back() = true;
  simplify_open(open, 0, far, tolerance, keep);
  simplify_open(open, far, open.size() - 1, tolerance, keep);
  Polygon out;
  for (std::size_t i = 0; i + 1 < open.size(); ++i)
    if (keep[i]) out.push_back(open[i]);
  return out.size() >= 3 ? out : ring;
}

Polygon outline(const BinaryMask& mask, double tolerance) {
  auto loops = trace_outlines(mask);
  if (loops.empty()) return {};
  return simplify_closed(loops.front(), tolerance);
}

bool point_in_polygon(const Polygon& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

BinaryMask rasterize(const std::vector<Polygon>& polys, Size size) {
  BinaryMask m(size);
  for (const Polygon& poly : polys) {
    if (poly.size() < 3) continue;
    for (int y = 0; y < size.height; ++y)
      for (int x = 0; x < size.width; ++x)
        if (point_in_polygon(poly, x + 0.5, y + 0.5)) m.set(x, y);
  }
  return m;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  const std::size_t inter = mask_intersection(a, b).count();
  const std::size_t uni = mask_union(a, b).count();
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace fe::app
