#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "tubekit/errors.hpp"

namespace tubekit {

// Axis-aligned box, continuous pixel coordinates, half-open:
// (x0,y0) top-left inclusive, (x1,y1) bottom-right exclusive.
struct BBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }

  bool valid() const {
    return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1) &&
           x1 > x0 && y1 > y0;
  }

  BBox shifted(double dx, double dy) const { return {x0 + dx, y0 + dy, x1 + dx, y1 + dy}; }

  friend bool operator==(const BBox& a, const BBox& b) = default;
};

inline void require_valid(const BBox& b) {
  if (!b.valid()) {
    throw ValidationError("invalid box [" + std::to_string(b.x0) + "," + std::to_string(b.y0) +
                          "," + std::to_string(b.x1) + "," + std::to_string(b.y1) + "]");
  }
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

// Box intersected with [0,width]x[0,height]; empty when the result degenerates.
inline std::optional<BBox> clamp_box(const BBox& b, double width, double height) {
  BBox c{std::clamp(b.x0, 0.0, width), std::clamp(b.y0, 0.0, height),
         std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height)};
  if (c.x1 <= c.x0 || c.y1 <= c.y0) return std::nullopt;
  return c;
}

// Strict ordering on coordinates, used for deterministic tie-breaks.
inline bool box_less(const BBox& a, const BBox& b) {
  if (a.x0 != b.x0) return a.x0 < b.x0;
  if (a.y0 != b.y0) return a.y0 < b.y0;
  if (a.x1 != b.x1) return a.x1 < b.x1;
  return a.y1 < b.y1;
}

}  // namespace tubekit
