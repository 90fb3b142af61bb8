#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

// Pairwise spatial relations between axis-aligned boxes. Boxes live in
// normalized image coordinates (fractions of width and height).

namespace ovc::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Box {
  double x_tl = 0.0;
  double y_tl = 0.0;
  double x_br = 0.0;
  double y_br = 0.0;

  double width() const noexcept { return x_br - x_tl; }
  double height() const noexcept { return y_br - y_tl; }
  double area() const noexcept { return width() * height(); }
  Point center() const noexcept { return {(x_tl + x_br) / 2.0, (y_tl + y_br) / 2.0}; }
  bool valid() const noexcept { return x_tl <= x_br && y_tl <= y_br; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Converts a pixel-space box to normalized coordinates, clamped to [0, 1].
inline Box normalize_box(double x1, double y1, double x2, double y2, double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) throw std::invalid_argument("normalize_box: image size must be positive");
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  Box b{clamp01(x1 / width), clamp01(y1 / height), clamp01(x2 / width), clamp01(y2 / height)};
  if (!b.valid()) throw std::invalid_argument("normalize_box: corners out of order");
  return b;
}

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double center_distance(const Box& a, const Box& b) { return distance(a.center(), b.center()); }

/// Euclidean distance from a point to the filled rectangle (0 inside).
inline double point_to_box(Point p, const Box& b) {
  const Point nearest{std::clamp(p.x, b.x_tl, b.x_br), std::clamp(p.y, b.y_tl, b.y_br)};
  return distance(p, nearest);
}

/// max over points of `from` of the distance to `to`. The distance to a convex
/// set is convex, so the maximum over a rectangle sits at one of its corners.
inline double directed_hausdorff(const Box& from, const Box& to) {
  const std::array<Point, 4> corners{Point{from.x_tl, from.y_tl}, Point{from.x_br, from.y_tl},
                                     Point{from.x_tl, from.y_br}, Point{from.x_br, from.y_br}};
  double d = 0.0;
  for (const Point& c : corners) d = std::max(d, point_to_box(c, to));
  return d;
}

inline double hausdorff(const Box& a, const Box& b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

/// Intersection over union; 0 when the union has no area.
inline double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x_br, b.x_br) - std::max(a.x_tl, b.x_tl));
  const double ih = std::max(0.0, std::min(a.y_br, b.y_br) - std::max(a.y_tl, b.y_tl));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// [center distance, Hausdorff distance, IoU], in that order.
inline std::array<double, 3> spatial_features(const Box& a, const Box& b) {
  return {center_distance(a, b), hausdorff(a, b), iou(a, b)};
}

namespace detail {

// Evenly spaced samples covering [lo, hi] inclusive with spacing <= step.
struct GridAxis {
  double lo = 0.0;
  double spacing = 0.0;
  std::size_t count = 1;

  GridAxis(double lo_, double hi, double step) : lo(lo_) {
    const double extent = hi - lo_;
    if (extent > 0.0) {
      count = static_cast<std::size_t>(std::ceil(extent / step - 1e-12)) + 1;
      spacing = extent / static_cast<double>(count - 1);
    }
  }
  double at(std::size_t i) const { return lo + spacing * static_cast<double>(i); }
  // Closest sample to v, searched exhaustively among the two neighbours of the
  // rounded index.
  double nearest(double v) const {
    if (count == 1) return lo;
    const double f = (v - lo) / spacing;
    const auto i = static_cast<std::ptrdiff_t>(std::clamp(std::floor(f), 0.0, static_cast<double>(count - 1)));
    double best = at(static_cast<std::size_t>(i));
    if (static_cast<std::size_t>(i) + 1 < count) {
      const double alt = at(static_cast<std::size_t>(i) + 1);
      if (std::abs(alt - v) < std::abs(best - v)) best = alt;
    }
    return best;
  }
};

inline double directed_grid(const Box& from, const Box& to, double step) {
  const GridAxis fx(from.x_tl, from.x_br, step), fy(from.y_tl, from.y_br, step);
  const GridAxis tx(to.x_tl, to.x_br, step), ty(to.y_tl, to.y_br, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < fx.count; ++i) {
    const double px = fx.at(i);
    const double qx = tx.nearest(px);
    for (std::size_t j = 0; j < fy.count; ++j) {
      const double py = fy.at(j);
      worst = std::max(worst, std::hypot(px - qx, py - ty.nearest(py)));
    }
  }
  return worst;
}

}  // namespace detail

/// Brute-force Hausdorff distance between uniform point grids (boundary
/// included) of both rectangles. A zero-extent side collapses to a segment or
/// a point. Used to cross-check the closed form.
inline double hausdorff_grid_oracle(const Box& a, const Box& b, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("hausdorff_grid_oracle: step must be positive");
  for (double edge : {a.width(), a.height(), b.width(), b.height()}) {
    if (edge > 0.0 && step > edge) {
      throw std::invalid_argument("hausdorff_grid_oracle: step " + std::to_string(step) +
                                  " exceeds box edge " + std::to_string(edge));
    }
  }
  return std::max(detail::directed_grid(a, b, step), detail::directed_grid(b, a, step));
}

}  // namespace ovc::geometry
