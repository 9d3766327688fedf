#pragma once

#include <array>
#include <cmath>

#include "cobev/error.hpp"

namespace cobev {

/// Ground-truth cuboid: bottom-center position in ego coordinates, extents,
/// and yaw about ego z.
struct Box3D {
  double x = 0.0, y = 0.0, z = 0.0;  // bottom center
  double l = 1.0, w = 1.0, h = 1.0;
  double theta = 0.0;  // yaw, [-pi, pi)

  double top() const { return z + h; }

  void validate() const {
    if (!(l > 0.0) || !(w > 0.0) || !(h > 0.0))
      raise(errc::domain_error, "box: extents must be positive");
  }

  /// Footprint corners in BEV order, counter-clockwise.
  std::array<std::array<double, 2>, 4> footprint_corners() const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double hl = 0.5 * l, hw = 0.5 * w;
    std::array<std::array<double, 2>, 4> out;
    const double dx[4] = {hl, -hl, -hl, hl};
    const double dy[4] = {hw, hw, -hw, -hw};
    for (int i = 0; i < 4; ++i)
      out[i] = {x + c * dx[i] - s * dy[i], y + s * dx[i] + c * dy[i]};
    return out;
  }

  /// True when (px, py) lies inside (or on) the footprint rectangle.
  bool contains_xy(double px, double py) const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double rx = c * (px - x) + s * (py - y);
    const double ry = -s * (px - x) + c * (py - y);
    return std::abs(rx) <= 0.5 * l && std::abs(ry) <= 0.5 * w;
  }
};

/// Area of the footprint clipped to an axis-aligned cell [x0,x1] x [y0,y1]
/// (Sutherland-Hodgman against the four cell edges).
inline double footprint_cell_area(const Box3D& box, double x0, double x1, double y0, double y1) {
  std::array<std::array<double, 2>, 8> poly;
  std::array<std::array<double, 2>, 8> next;
  const auto corners = box.footprint_corners();
  std::size_t n = 4;
  for (std::size_t i = 0; i < 4; ++i) poly[i] = corners[i];

  // clip by: keep(p) where sign * p[axis] <= sign * bound
  const auto clip = [&](int axis, double bound, double sign) {
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = poly[i];
      const auto& b = poly[(i + 1) % n];
      const bool a_in = sign * a[axis] <= sign * bound;
      const bool b_in = sign * b[axis] <= sign * bound;
      if (a_in) next[m++] = a;
      if (a_in != b_in) {
        const double t = (bound - a[axis]) / (b[axis] - a[axis]);
        next[m][axis] = bound;
        next[m][1 - axis] = a[1 - axis] + t * (b[1 - axis] - a[1 - axis]);
        ++m;
      }
    }
    n = m;
    for (std::size_t i = 0; i < n; ++i) poly[i] = next[i];
  };
  clip(0, x1, 1.0);
  if (n == 0) return 0.0;
  clip(0, x0, -1.0);
  if (n == 0) return 0.0;
  clip(1, y1, 1.0);
  if (n == 0) return 0.0;
  clip(1, y0, -1.0);
  if (n < 3) return 0.0;

  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    area2 += a[0] * b[1] - b[0] * a[1];
  }
  return 0.5 * std::abs(area2);
}

/// Separating-axis rectangle overlap test for box footprints; touching edges
/// count as disjoint area and therefore as no overlap.
inline bool footprints_overlap(const Box3D& a, const Box3D& b) {
  const auto ca = a.footprint_corners();
  const auto cb = b.footprint_corners();
  const auto axes_of = [](const Box3D& box) {
    const double c = std::cos(box.theta), s = std::sin(box.theta);
    return std::array<std::array<double, 2>, 2>{{{c, s}, {-s, c}}};
  };
  const auto test_axes = [&](const Box3D& box) {
    for (const auto& ax : axes_of(box)) {
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& p : ca) {
        const double v = ax[0] * p[0] + ax[1] * p[1];
        amin = std::min(amin, v);
        amax = std::max(amax, v);
      }
      for (const auto& p : cb) {
        const double v = ax[0] * p[0] + ax[1] * p[1];
        bmin = std::min(bmin, v);
        bmax = std::max(bmax, v);
      }
      if (amax <= bmin || bmax <= amin) return false;  // separated along this axis
    }
    return true;
  };
  return test_axes(a) && test_axes(b);
}

}  // namespace cobev
