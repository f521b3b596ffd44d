#pragma once

// Planar geometry and lattice primitives shared by every other module.
//
// Coordinates are plot-local meters. Grids live on a global pixel lattice:
// lattice cell (i, j) covers [i*res, (i+1)*res) x [j*res, (j+1)*res), with
// row index increasing with y (row 0 at the bottom of any grid).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crownval/error.hpp"

namespace crownval {

struct Point3D {
  double x = 0;
  double y = 0;
  double z = 0;

  bool operator==(const Point3D&) const = default;
};

struct Vec2 {
  double x = 0;
  double y = 0;

  bool operator==(const Vec2&) const = default;
};

inline bool all_finite(const Point3D& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

/// Axis-aligned box with strictly positive width and height.
class BBox {
 public:
  BBox(double minx, double miny, double maxx, double maxy)
      : minx_(minx), miny_(miny), maxx_(maxx), maxy_(maxy) {
    if (!valid(minx, miny, maxx, maxy)) {
      throw Error("degenerate or non-finite bbox (" + std::to_string(minx) + ", " +
                  std::to_string(miny) + ", " + std::to_string(maxx) + ", " +
                  std::to_string(maxy) + ")");
    }
  }

  static bool valid(double minx, double miny, double maxx, double maxy) {
    return std::isfinite(minx) && std::isfinite(miny) && std::isfinite(maxx) &&
           std::isfinite(maxy) && minx < maxx && miny < maxy;
  }

  static std::optional<BBox> try_make(double minx, double miny, double maxx, double maxy) {
    if (!valid(minx, miny, maxx, maxy)) return std::nullopt;
    return BBox(minx, miny, maxx, maxy);
  }

  double minx() const { return minx_; }
  double miny() const { return miny_; }
  double maxx() const { return maxx_; }
  double maxy() const { return maxy_; }
  double width() const { return maxx_ - minx_; }
  double height() const { return maxy_ - miny_; }
  double area() const { return width() * height(); }

  bool contains(const BBox& o) const {
    return o.minx_ >= minx_ && o.miny_ >= miny_ && o.maxx_ <= maxx_ && o.maxy_ <= maxy_;
  }

  bool contains(Vec2 p) const {
    return p.x >= minx_ && p.x <= maxx_ && p.y >= miny_ && p.y <= maxy_;
  }

  BBox translated(double dx, double dy) const {
    return BBox(minx_ + dx, miny_ + dy, maxx_ + dx, maxy_ + dy);
  }

  bool operator==(const BBox&) const = default;

 private:
  double minx_, miny_, maxx_, maxy_;
};

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.maxx(), b.maxx()) - std::max(a.minx(), b.minx());
  const double h = std::min(a.maxy(), b.maxy()) - std::max(a.miny(), b.miny());
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

/// Intersection over union of two boxes, in [0, 1].
inline double bbox_iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Intersection rectangle, or nullopt when it has zero area.
inline std::optional<BBox> clip_bbox(const BBox& b, const BBox& extent) {
  return BBox::try_make(std::max(b.minx(), extent.minx()), std::max(b.miny(), extent.miny()),
                        std::min(b.maxx(), extent.maxx()), std::min(b.maxy(), extent.maxy()));
}

inline BBox bbox_union(const BBox& a, const BBox& b) {
  return BBox(std::min(a.minx(), b.minx()), std::min(a.miny(), b.miny()),
              std::max(a.maxx(), b.maxx()), std::max(a.maxy(), b.maxy()));
}

/// Closed vertex ring: front() == back().
using Ring = std::vector<Vec2>;

/// Shoelace signed area; positive for counter-clockwise rings. Products are
/// taken relative to the first vertex to limit cancellation.
inline double signed_area(std::span<const Vec2> ring) {
  if (ring.size() < 4) return 0.0;
  const Vec2 o = ring.front();
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const double x0 = ring[i].x - o.x, y0 = ring[i].y - o.y;
    const double x1 = ring[i + 1].x - o.x, y1 = ring[i + 1].y - o.y;
    twice += x0 * y1 - x1 * y0;
  }
  return 0.5 * twice;
}

/// Simple polygon with optional holes. Exterior is stored counter-clockwise,
/// interiors clockwise; the constructor normalises winding.
class Polygon {
 public:
  explicit Polygon(Ring exterior, std::vector<Ring> interiors = {})
      : exterior_(std::move(exterior)), interiors_(std::move(interiors)) {
    check_ring(exterior_);
    if (signed_area(exterior_) < 0) std::reverse(exterior_.begin(), exterior_.end());
    for (auto& hole : interiors_) {
      check_ring(hole);
      if (signed_area(hole) > 0) std::reverse(hole.begin(), hole.end());
    }
    if (!(area() > 0)) throw Error("polygon has non-positive area");
  }

  static Polygon rectangle(const BBox& b) {
    return Polygon(Ring{{b.minx(), b.miny()},
                        {b.maxx(), b.miny()},
                        {b.maxx(), b.maxy()},
                        {b.minx(), b.maxy()},
                        {b.minx(), b.miny()}});
  }

  const Ring& exterior() const { return exterior_; }
  const std::vector<Ring>& interiors() const { return interiors_; }

  /// Exterior area minus hole areas.
  double area() const {
    double a = signed_area(exterior_);
    for (const auto& hole : interiors_) a += signed_area(hole);
    return a;
  }

  Polygon without_interiors() const { return Polygon(exterior_); }

  bool operator==(const Polygon&) const = default;

 private:
  static void check_ring(const Ring& r) {
    if (r.size() < 4) throw Error("polygon ring needs at least 4 vertices (closed)");
    if (r.front() != r.back()) throw Error("polygon ring is not closed");
    for (const auto& v : r) {
      if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw Error("non-finite polygon vertex");
    }
  }

  Ring exterior_;
  std::vector<Ring> interiors_;
};

inline double polygon_area(const Polygon& p) { return p.area(); }

/// Tight bounds of the exterior ring.
inline BBox polygon_bbox(const Polygon& p) {
  const auto& ring = p.exterior();
  double minx = ring.front().x, maxx = minx;
  double miny = ring.front().y, maxy = miny;
  for (const auto& v : ring) {
    minx = std::min(minx, v.x);
    maxx = std::max(maxx, v.x);
    miny = std::min(miny, v.y);
    maxy = std::max(maxy, v.y);
  }
  return BBox(minx, miny, maxx, maxy);
}

inline Polygon translate(const Polygon& p, double dx, double dy) {
  auto shift = [&](const Ring& r) {
    Ring out;
    out.reserve(r.size());
    for (const auto& v : r) out.push_back({v.x + dx, v.y + dy});
    return out;
  };
  std::vector<Ring> holes;
  holes.reserve(p.interiors().size());
  for (const auto& h : p.interiors()) holes.push_back(shift(h));
  return Polygon(shift(p.exterior()), std::move(holes));
}

namespace detail {

// One Sutherland-Hodgman pass against an axis-aligned half-plane.
// axis 0 clips x, axis 1 clips y; keep_greater selects the kept side.
inline std::vector<Vec2> clip_half_plane(const std::vector<Vec2>& in, int axis, double bound,
                                         bool keep_greater) {
  std::vector<Vec2> out;
  if (in.empty()) return out;
  auto coord = [axis](const Vec2& v) { return axis == 0 ? v.x : v.y; };
  auto inside = [&](const Vec2& v) {
    return keep_greater ? coord(v) >= bound : coord(v) <= bound;
  };
  auto cross = [&](const Vec2& a, const Vec2& b) {
    const double t = (bound - coord(a)) / (coord(b) - coord(a));
    Vec2 r{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
    if (axis == 0) r.x = bound; else r.y = bound;
    return r;
  };
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Vec2& cur = in[i];
    const Vec2& prev = in[(i + in.size() - 1) % in.size()];
    if (inside(cur)) {
      if (!inside(prev)) out.push_back(cross(prev, cur));
      out.push_back(cur);
    } else if (inside(prev)) {
      out.push_back(cross(prev, cur));
    }
  }
  return out;
}

inline double clipped_ring_area(const Ring& ring, const BBox& window) {
  std::vector<Vec2> open(ring.begin(), ring.end() - 1);
  open = clip_half_plane(open, 0, window.minx(), true);
  open = clip_half_plane(open, 0, window.maxx(), false);
  open = clip_half_plane(open, 1, window.miny(), true);
  open = clip_half_plane(open, 1, window.maxy(), false);
  if (open.size() < 3) return 0.0;
  open.push_back(open.front());
  return signed_area(open);
}

}  // namespace detail

/// Area of the polygon (holes subtracted) lying inside an axis-aligned window.
inline double clipped_area(const Polygon& p, const BBox& window) {
  double a = detail::clipped_ring_area(p.exterior(), window);
  for (const auto& hole : p.interiors()) a += detail::clipped_ring_area(hole, window);
  return std::max(0.0, a);
}

/// Even-odd point-in-ring test. Points exactly on an edge are unspecified.
inline bool point_in_ring(const Ring& ring, Vec2 p) {
  bool in = false;
  for (std::size_t i = 0, j = ring.size() - 2; i + 1 < ring.size(); j = i++) {
    const Vec2& a = ring[i];
    const Vec2& b = ring[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) {
      in = !in;
    }
  }
  return in;
}

inline bool point_in_polygon(const Polygon& poly, Vec2 p) {
  if (!point_in_ring(poly.exterior(), p)) return false;
  for (const auto& hole : poly.interiors()) {
    if (point_in_ring(hole, p)) return false;
  }
  return true;
}

/// Global lattice index of coordinate v at the given resolution.
inline std::int64_t lattice_index(double v, double resolution) {
  return static_cast<std::int64_t>(std::floor(v / resolution));
}

/// Raster geometry on the global lattice. The lower-left cell is lattice cell
/// (col0, row0), so origin_x = col0 * resolution exactly by construction.
struct GridSpec {
  std::int64_t col0 = 0;
  std::int64_t row0 = 0;
  std::int64_t ncols = 0;
  std::int64_t nrows = 0;
  double resolution = 0;

  static GridSpec from_lattice(std::int64_t col0, std::int64_t row0, std::int64_t ncols,
                               std::int64_t nrows, double resolution) {
    if (!(resolution > 0) || !std::isfinite(resolution)) throw Error("resolution must be > 0");
    if (ncols <= 0 || nrows <= 0) throw Error("grid dimensions must be positive");
    return GridSpec{col0, row0, ncols, nrows, resolution};
  }

  /// Grid from a world-space origin. The origin must sit on the lattice.
  static GridSpec from_origin(double origin_x, double origin_y, double resolution,
                              std::int64_t ncols, std::int64_t nrows) {
    if (!(resolution > 0)) throw Error("resolution must be > 0");
    auto snap = [&](double v, const char* axis) {
      const double q = v / resolution;
      const double r = std::round(q);
      if (std::abs(q - r) > 1e-9 * std::max(1.0, std::abs(q))) {
        throw Error(std::string("grid origin ") + axis + " is not a multiple of the resolution");
      }
      return static_cast<std::int64_t>(r);
    };
    return from_lattice(snap(origin_x, "x"), snap(origin_y, "y"), ncols, nrows, resolution);
  }

  /// Smallest lattice-aligned grid whose cells contain every point of `extent`.
  static GridSpec covering(const BBox& extent, double resolution) {
    const auto c0 = lattice_index(extent.minx(), resolution);
    const auto r0 = lattice_index(extent.miny(), resolution);
    const auto c1 = lattice_index(extent.maxx(), resolution);
    const auto r1 = lattice_index(extent.maxy(), resolution);
    return from_lattice(c0, r0, c1 - c0 + 1, r1 - r0 + 1, resolution);
  }

  double origin_x() const { return static_cast<double>(col0) * resolution; }
  double origin_y() const { return static_cast<double>(row0) * resolution; }
  double cell_x(std::int64_t col) const { return static_cast<double>(col0 + col) * resolution; }
  double cell_y(std::int64_t row) const { return static_cast<double>(row0 + row) * resolution; }
  std::size_t cell_count() const { return static_cast<std::size_t>(ncols * nrows); }

  BBox extent() const {
    return BBox(origin_x(), origin_y(), cell_x(ncols), cell_y(nrows));
  }

  bool contains_grid(const GridSpec& inner) const {
    return inner.col0 >= col0 && inner.row0 >= row0 &&
           inner.col0 + inner.ncols <= col0 + ncols && inner.row0 + inner.nrows <= row0 + nrows;
  }

  bool operator==(const GridSpec&) const = default;
};

/// Row-major raster over a GridSpec; row 0 is the bottom row.
template <typename T>
struct Grid {
  GridSpec spec;
  std::vector<T> values;

  Grid() = default;
  Grid(const GridSpec& s, T fill) : spec(s), values(s.cell_count(), fill) {}

  std::size_t offset(std::int64_t col, std::int64_t row) const {
    return static_cast<std::size_t>(row * spec.ncols + col);
  }
  T& at(std::int64_t col, std::int64_t row) { return values[offset(col, row)]; }
  const T& at(std::int64_t col, std::int64_t row) const { return values[offset(col, row)]; }

  bool operator==(const Grid&) const = default;
};

}  // namespace crownval
