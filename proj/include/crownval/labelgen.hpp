#pragma once

// Crown label generation from individually segmented tree point clouds.
//
//   1. rasterize every tree to a max-height DSM on the shared lattice
//   2. gap-fill each DSM with a single-pass neighbourhood maximum
//   3. merge all DSMs into a two-band canopy mosaic (height, tallest tree id)
//   4. polygonize the id band into 4-connected pixel components
//   5. keep each tree's largest component with its holes removed
//
// Labels produced this way do not overlap except where a removed hole
// enclosed pixels owned by another tree.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "crownval/error.hpp"
#include "crownval/geom.hpp"
#include "crownval/parallel.hpp"
#include "crownval/pointcloud.hpp"
#include "crownval/raster.hpp"
#include "crownval/textio.hpp"

namespace crownval {

struct LabelGenConfig {
  double resolution = 0.02;  // meters per pixel
  int fill_window = 1;       // Chebyshev radius in pixels

  void validate() const {
    if (!(resolution > 0) || !std::isfinite(resolution)) throw Error("resolution must be > 0");
    if (fill_window < 0) throw Error("fill window must be >= 0");
  }
};

/// Per-tree surface model; empty cells hold kNoHeight.
using DsmTile = Grid<double>;

struct TreeTile {
  TreeId id = 0;
  DsmTile tile;
};

struct CanopyMosaic {
  Grid<double> height;      // top-of-canopy height, kNoHeight where empty
  Grid<TreeId> index;       // id of the tree attaining `height`, kNoTree where empty

  const GridSpec& grid() const { return height.spec; }
};

struct CrownLabel {
  TreeId tree_id = 0;
  Polygon footprint;
  BBox bbox;
  std::optional<double> max_height;  // absent for labels without height data
  double area = 0;                   // square meters
};

/// Max-z DSM over the tree's snapped bounding box.
inline DsmTile rasterize_tree(const TreeCloud& cloud, double resolution) {
  if (cloud.points.empty()) throw Error("cannot rasterize an empty tree");
  if (!(resolution > 0)) throw Error("resolution must be > 0");
  std::int64_t c0 = lattice_index(cloud.points.front().x, resolution), c1 = c0;
  std::int64_t r0 = lattice_index(cloud.points.front().y, resolution), r1 = r0;
  for (const auto& p : cloud.points) {
    const auto c = lattice_index(p.x, resolution);
    const auto r = lattice_index(p.y, resolution);
    c0 = std::min(c0, c);
    c1 = std::max(c1, c);
    r0 = std::min(r0, r);
    r1 = std::max(r1, r);
  }
  DsmTile tile(GridSpec::from_lattice(c0, r0, c1 - c0 + 1, r1 - r0 + 1, resolution), kNoHeight);
  for (const auto& p : cloud.points) {
    double& cell = tile.at(lattice_index(p.x, resolution) - c0, lattice_index(p.y, resolution) - r0);
    cell = std::max(cell, p.z);
  }
  return tile;
}

/// Fills each empty cell that has a valid cell within Chebyshev distance
/// `window` with the maximum of those cells. Filled cells do not seed further
/// filling and the tile is not enlarged.
inline DsmTile fill_gaps(const DsmTile& tile, int window) {
  if (window < 0) throw Error("fill window must be >= 0");
  DsmTile out = tile;
  if (window == 0) return out;
  const auto& g = tile.spec;
  for (std::int64_t row = 0; row < g.nrows; ++row) {
    for (std::int64_t col = 0; col < g.ncols; ++col) {
      if (has_height(tile.at(col, row))) continue;
      double best = kNoHeight;
      const auto rlo = std::max<std::int64_t>(0, row - window);
      const auto rhi = std::min<std::int64_t>(g.nrows - 1, row + window);
      const auto clo = std::max<std::int64_t>(0, col - window);
      const auto chi = std::min<std::int64_t>(g.ncols - 1, col + window);
      for (auto r = rlo; r <= rhi; ++r) {
        for (auto c = clo; c <= chi; ++c) best = std::max(best, tile.at(c, r));
      }
      out.at(col, row) = best;
    }
  }
  return out;
}

/// Lattice bounds of the union of all tiles.
inline GridSpec mosaic_grid(std::span<const TreeTile> tiles) {
  if (tiles.empty()) throw Error("no tiles to mosaic");
  const double res = tiles.front().tile.spec.resolution;
  std::int64_t c0 = tiles.front().tile.spec.col0, r0 = tiles.front().tile.spec.row0;
  std::int64_t c1 = c0 + tiles.front().tile.spec.ncols, r1 = r0 + tiles.front().tile.spec.nrows;
  for (const auto& t : tiles) {
    const auto& s = t.tile.spec;
    if (s.resolution != res) throw Error("tiles have differing resolutions");
    c0 = std::min(c0, s.col0);
    r0 = std::min(r0, s.row0);
    c1 = std::max(c1, s.col0 + s.ncols);
    r1 = std::max(r1, s.row0 + s.nrows);
  }
  return GridSpec::from_lattice(c0, r0, c1 - c0, r1 - r0, res);
}

/// Per-pixel maximum over all tiles; ties go to the smaller tree id, so the
/// result does not depend on tile order. Tiles must share the mosaic lattice.
inline CanopyMosaic build_mosaic(std::span<const TreeTile> tiles, const GridSpec& grid) {
  CanopyMosaic m{Grid<double>(grid, kNoHeight), Grid<TreeId>(grid, kNoTree)};
  for (const auto& t : tiles) {
    const auto& s = t.tile.spec;
    if (s.resolution != grid.resolution) {
      throw Error("tile of tree " + std::to_string(t.id) + " is not on the mosaic lattice");
    }
    if (!grid.contains_grid(s)) {
      throw Error("tile of tree " + std::to_string(t.id) + " lies outside the mosaic extent");
    }
    const auto dc = s.col0 - grid.col0;
    const auto dr = s.row0 - grid.row0;
    for (std::int64_t row = 0; row < s.nrows; ++row) {
      for (std::int64_t col = 0; col < s.ncols; ++col) {
        const double h = t.tile.at(col, row);
        if (!has_height(h)) continue;
        double& mh = m.height.at(col + dc, row + dr);
        TreeId& mi = m.index.at(col + dc, row + dr);
        if (h > mh || (h == mh && (mi == kNoTree || t.id < mi))) {
          mh = h;
          mi = t.id;
        }
      }
    }
  }
  return m;
}

inline CanopyMosaic build_mosaic(std::span<const TreeTile> tiles, const BBox& extent,
                                 double resolution) {
  return build_mosaic(tiles, GridSpec::covering(extent, resolution));
}

// ---------------------------------------------------------------------------
// Polygonization

/// One 4-connected component of equal ids, traced on the pixel lattice.
/// Vertices are global lattice coordinates; rings are closed. rings[0] is
/// the counter-clockwise exterior, the rest are clockwise holes.
struct PixelComponent {
  TreeId id = 0;
  std::int64_t pixel_count = 0;
  std::vector<std::vector<std::array<std::int64_t, 2>>> rings;

  /// Pixels enclosed by the exterior ring (component plus its holes).
  std::int64_t filled_pixel_count() const {
    const auto& r = rings.front();
    std::int64_t twice = 0;
    for (std::size_t i = 0; i + 1 < r.size(); ++i) {
      twice += r[i][0] * r[i + 1][1] - r[i + 1][0] * r[i][1];
    }
    return twice / 2;
  }

  /// Lower-left corner of the exterior's bounding box.
  std::array<std::int64_t, 2> min_corner() const {
    std::array<std::int64_t, 2> m = rings.front().front();
    for (const auto& v : rings.front()) {
      m[0] = std::min(m[0], v[0]);
      m[1] = std::min(m[1], v[1]);
    }
    return m;
  }
};

namespace detail {

// Boundary edge directions, counter-clockwise order: E, N, W, S.
inline constexpr std::array<std::array<int, 2>, 4> kStep{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

struct BoundaryEdge {
  std::int64_t x, y;  // start vertex, grid-local lattice coordinates
  int dir;
};

inline std::vector<std::array<std::int64_t, 2>> trace_ring(
    const std::vector<BoundaryEdge>& edges, std::size_t first,
    const std::unordered_map<std::uint64_t, std::array<int, 2>>& outgoing,
    std::vector<char>& used, std::int64_t stride) {
  std::vector<std::array<std::int64_t, 2>> verts;
  std::vector<int> dirs;
  std::size_t cur = first;
  while (true) {
    used[cur] = 1;
    const auto& e = edges[cur];
    verts.push_back({e.x, e.y});
    dirs.push_back(e.dir);
    const std::int64_t ex = e.x + kStep[static_cast<std::size_t>(e.dir)][0];
    const std::int64_t ey = e.y + kStep[static_cast<std::size_t>(e.dir)][1];
    const auto& out = outgoing.at(static_cast<std::uint64_t>(ey * stride + ex));
    std::size_t next;
    if (out[1] < 0) {
      next = static_cast<std::size_t>(out[0]);
    } else {
      // Saddle vertex: turn right so the two complementary regions stay
      // separate and every ring remains simple.
      const int right = (e.dir + 3) % 4;
      next = static_cast<std::size_t>(edges[static_cast<std::size_t>(out[0])].dir == right ? out[0]
                                                                                          : out[1]);
    }
    if (next == first) break;
    if (used[next]) throw Error("polygonize: inconsistent boundary");
    cur = next;
  }
  // Keep only corners: vertex i is a corner when the incoming and outgoing
  // directions differ.
  std::vector<std::array<std::int64_t, 2>> corners;
  const std::size_t n = verts.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (dirs[(i + n - 1) % n] != dirs[i]) corners.push_back(verts[i]);
  }
  // Deterministic start: lexicographically smallest (y, x) corner.
  const auto start = std::min_element(corners.begin(), corners.end(), [](auto& a, auto& b) {
    return a[1] != b[1] ? a[1] < b[1] : a[0] < b[0];
  });
  std::rotate(corners.begin(), start, corners.end());
  corners.push_back(corners.front());
  return corners;
}

}  // namespace detail

/// Labels 4-connected components of equal ids and traces their boundaries.
/// Components are returned in row-major order of their first pixel.
inline std::vector<PixelComponent> trace_components(const Grid<TreeId>& index) {
  const auto& g = index.spec;
  const std::int64_t W = g.ncols, H = g.nrows;
  std::vector<std::int32_t> comp(index.values.size(), -1);
  std::vector<PixelComponent> out;
  std::vector<std::int64_t> stack;

  for (std::int64_t start = 0; start < W * H; ++start) {
    if (index.values[static_cast<std::size_t>(start)] == kNoTree ||
        comp[static_cast<std::size_t>(start)] >= 0) {
      continue;
    }
    const TreeId id = index.values[static_cast<std::size_t>(start)];
    const auto label = static_cast<std::int32_t>(out.size());
    PixelComponent pc;
    pc.id = id;
    stack.assign(1, start);
    comp[static_cast<std::size_t>(start)] = label;
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      ++pc.pixel_count;
      const auto col = p % W, row = p / W;
      const std::int64_t nbr[4] = {col + 1 < W ? p + 1 : -1, row + 1 < H ? p + W : -1,
                                   col > 0 ? p - 1 : -1, row > 0 ? p - W : -1};
      for (auto q : nbr) {
        if (q < 0) continue;
        const auto uq = static_cast<std::size_t>(q);
        if (comp[uq] < 0 && index.values[uq] == id) {
          comp[uq] = label;
          stack.push_back(q);
        }
      }
    }
    out.push_back(std::move(pc));
  }

  // Boundary edges with the component on their left.
  std::vector<std::vector<detail::BoundaryEdge>> edges(out.size());
  auto other = [&](std::int64_t col, std::int64_t row) -> std::int32_t {
    if (col < 0 || row < 0 || col >= W || row >= H) return -1;
    return comp[static_cast<std::size_t>(row * W + col)];
  };
  for (std::int64_t row = 0; row < H; ++row) {
    for (std::int64_t col = 0; col < W; ++col) {
      const auto c = comp[static_cast<std::size_t>(row * W + col)];
      if (c < 0) continue;
      auto& e = edges[static_cast<std::size_t>(c)];
      if (other(col, row - 1) != c) e.push_back({col, row, 0});
      if (other(col + 1, row) != c) e.push_back({col + 1, row, 1});
      if (other(col, row + 1) != c) e.push_back({col + 1, row + 1, 2});
      if (other(col - 1, row) != c) e.push_back({col, row + 1, 3});
    }
  }

  const std::int64_t stride = W + 1;
  for (std::size_t c = 0; c < out.size(); ++c) {
    const auto& ce = edges[c];
    std::unordered_map<std::uint64_t, std::array<int, 2>> outgoing;
    outgoing.reserve(ce.size());
    for (std::size_t i = 0; i < ce.size(); ++i) {
      const auto key = static_cast<std::uint64_t>(ce[i].y * stride + ce[i].x);
      auto [it, fresh] = outgoing.try_emplace(key, std::array<int, 2>{static_cast<int>(i), -1});
      if (!fresh) it->second[1] = static_cast<int>(i);
    }
    std::vector<char> used(ce.size(), 0);
    std::vector<std::vector<std::array<std::int64_t, 2>>> rings;
    for (std::size_t i = 0; i < ce.size(); ++i) {
      if (!used[i]) rings.push_back(detail::trace_ring(ce, i, outgoing, used, stride));
    }
    for (auto& ring : rings) {
      for (auto& v : ring) {
        v[0] += g.col0;
        v[1] += g.row0;
      }
    }
    // Exactly one ring is counter-clockwise: the exterior.
    auto twice_area = [](const auto& r) {
      std::int64_t t = 0;
      for (std::size_t i = 0; i + 1 < r.size(); ++i) t += r[i][0] * r[i + 1][1] - r[i + 1][0] * r[i][1];
      return t;
    };
    const auto ext = std::find_if(rings.begin(), rings.end(),
                                  [&](const auto& r) { return twice_area(r) > 0; });
    if (ext == rings.end()) throw Error("polygonize: component without exterior ring");
    std::rotate(rings.begin(), ext, ext + 1);
    std::sort(rings.begin() + 1, rings.end());
    out[c].rings = std::move(rings);
  }
  return out;
}

inline Polygon component_polygon(const PixelComponent& pc, double resolution) {
  auto world = [&](const std::vector<std::array<std::int64_t, 2>>& r) {
    Ring ring;
    ring.reserve(r.size());
    for (const auto& v : r) {
      ring.push_back({static_cast<double>(v[0]) * resolution, static_cast<double>(v[1]) * resolution});
    }
    return ring;
  };
  std::vector<Ring> holes;
  for (std::size_t i = 1; i < pc.rings.size(); ++i) holes.push_back(world(pc.rings[i]));
  return Polygon(world(pc.rings.front()), std::move(holes));
}

/// Polygons of every 4-connected component labelled `tree_id`, with holes.
/// Empty when the id does not occur.
inline std::vector<Polygon> polygonize_index(const CanopyMosaic& mosaic, TreeId tree_id) {
  std::vector<Polygon> polys;
  for (const auto& pc : trace_components(mosaic.index)) {
    if (pc.id == tree_id) polys.push_back(component_polygon(pc, mosaic.grid().resolution));
  }
  return polys;
}

/// Largest polygon by area (holes subtracted), returned without holes. Equal
/// areas resolve to the smallest bounding-box min corner (x, then y).
inline Polygon select_footprint(std::span<const Polygon> polys) {
  if (polys.empty()) throw Error("no polygons: tree has no visible footprint");
  const Polygon* best = &polys.front();
  for (const auto& p : polys.subspan(1)) {
    const double a = polygon_area(p), ba = polygon_area(*best);
    if (a > ba) {
      best = &p;
    } else if (a == ba) {
      const auto pb = polygon_bbox(p), bb = polygon_bbox(*best);
      if (std::pair(pb.minx(), pb.miny()) < std::pair(bb.minx(), bb.miny())) best = &p;
    }
  }
  return best->without_interiors();
}

// ---------------------------------------------------------------------------
// Pipeline

struct LabelGenResult {
  std::vector<CrownLabel> labels;  // sorted by tree id
  CanopyMosaic mosaic;
  std::vector<TreeId> omitted;     // trees owning no mosaic pixel
};

/// Per-tree gap-filled DSMs, in plot tree order.
inline std::vector<TreeTile> tree_surfaces(const PlotCloudSet& plot, const LabelGenConfig& cfg,
                                           unsigned threads = 1) {
  cfg.validate();
  std::vector<TreeTile> tiles(plot.trees.size());
  parallel_for(plot.trees.size(), threads, [&](std::size_t i) {
    tiles[i] = TreeTile{plot.trees[i].id,
                        fill_gaps(rasterize_tree(plot.trees[i], cfg.resolution), cfg.fill_window)};
  });
  return tiles;
}

inline LabelGenResult generate_labels(const PlotCloudSet& plot, const LabelGenConfig& cfg,
                                      unsigned threads = 1) {
  const auto tiles = tree_surfaces(plot, cfg, threads);
  LabelGenResult result;
  result.mosaic = build_mosaic(tiles, mosaic_grid(tiles));
  const double res = cfg.resolution;

  std::map<TreeId, const PixelComponent*> chosen;
  const auto components = trace_components(result.mosaic.index);
  for (const auto& pc : components) {
    auto [it, fresh] = chosen.try_emplace(pc.id, &pc);
    if (fresh) continue;
    const PixelComponent* cur = it->second;
    if (pc.pixel_count > cur->pixel_count ||
        (pc.pixel_count == cur->pixel_count && pc.min_corner() < cur->min_corner())) {
      it->second = &pc;
    }
  }

  for (const auto& tree : plot.trees) {
    const auto it = chosen.find(tree.id);
    if (it == chosen.end()) {
      result.omitted.push_back(tree.id);
      continue;
    }
    Polygon footprint = component_polygon(*it->second, res).without_interiors();
    const BBox bbox = polygon_bbox(footprint);
    const double area = static_cast<double>(it->second->filled_pixel_count()) * res * res;
    result.labels.push_back(CrownLabel{tree.id, std::move(footprint), bbox, tree.max_z(), area});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Alignment corrections

struct Shift {
  double dx = 0;
  double dy = 0;
};

struct Corrections {
  Shift global;
  std::map<TreeId, Shift> per_crown;
};

/// Translates every footprint by the global shift, then applies per-crown
/// shifts. Areas are carried over unchanged.
inline std::vector<CrownLabel> apply_corrections(std::span<const CrownLabel> labels,
                                                 const Corrections& corr) {
  for (const auto& [id, shift] : corr.per_crown) {
    const bool known = std::any_of(labels.begin(), labels.end(),
                                   [id = id](const CrownLabel& l) { return l.tree_id == id; });
    if (!known) throw Error("correction for unknown tree id " + std::to_string(id));
  }
  std::vector<CrownLabel> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    Polygon fp = translate(l.footprint, corr.global.dx, corr.global.dy);
    if (const auto it = corr.per_crown.find(l.tree_id); it != corr.per_crown.end()) {
      fp = translate(fp, it->second.dx, it->second.dy);
    }
    const BBox bbox = polygon_bbox(fp);
    out.push_back(CrownLabel{l.tree_id, std::move(fp), bbox, l.max_height, l.area});
  }
  return out;
}

/// CSV "tree_id,dx,dy"; a row with tree_id "*" sets the global shift.
inline Corrections read_corrections(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  const auto rows = text::lines(content);
  if (rows.empty()) throw ParseError(path.string(), 1, "missing header");
  const auto header = text::split(rows.front(), ',');
  if (header.size() < 3 || header[0] != "tree_id" || header[1] != "dx" || header[2] != "dy") {
    throw ParseError(path.string(), 1, "header must be tree_id,dx,dy");
  }
  Corrections corr;
  bool have_global = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto line = text::trim(rows[i]);
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() < 3) throw ParseError(path.string(), i + 1, "expected tree_id,dx,dy");
    const auto dx = text::parse_double(f[1]);
    const auto dy = text::parse_double(f[2]);
    if (!dx || !dy || !std::isfinite(*dx) || !std::isfinite(*dy)) {
      throw ParseError(path.string(), i + 1, "non-numeric shift");
    }
    if (f[0] == "*") {
      if (have_global) throw ParseError(path.string(), i + 1, "duplicate global shift");
      corr.global = {*dx, *dy};
      have_global = true;
      continue;
    }
    const auto id = text::parse_int(f[0]);
    if (!id || *id < 0) throw ParseError(path.string(), i + 1, "invalid tree_id");
    if (!corr.per_crown.emplace(*id, Shift{*dx, *dy}).second) {
      throw ParseError(path.string(), i + 1, "duplicate tree_id " + std::to_string(*id));
    }
  }
  return corr;
}

}  // namespace crownval
