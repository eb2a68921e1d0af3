#pragma once

#include <vector>

#include "fe/image.hpp"

namespace fe::app {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Polygon = std::vector<Point>;

struct BoundingBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

BoundingBox bounding_box(const BinaryMask& mask);

/// Outer boundaries of the mask's 4-connected pieces along pixel edges
/// (vertices on the pixel-corner lattice), largest area first. Holes are
/// not reported.
std::vector<Polygon> trace_outlines(const BinaryMask& mask);

/// Douglas-Peucker on a closed ring.
Polygon simplify_closed(const Polygon& ring, double tolerance);

/// Largest simplified outline, empty for an empty mask.
Polygon outline(const BinaryMask& mask, double tolerance = 1.5);

double polygon_area(const Polygon& poly);

/// Even-odd point-in-polygon test.
bool point_in_polygon(const Polygon& poly, double x, double y);

/// Pixels whose centres fall inside any of the polygons.
BinaryMask rasterize(const std::vector<Polygon>& polys, Size size);

double mask_iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace fe::app
