#pragma once

// Test helpers: a hand-rolled seeded generator, small constructors, a scratch
// directory, and reference implementations used as oracles.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "crownval/crownval.hpp"

namespace testing_support {

using namespace crownval;

// splitmix64 stream; independent of the library's generator.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : s_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double real(double lo, double hi) { return lo + (hi - lo) * unit(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
  bool coin(double p = 0.5) { return unit() < p; }

  BBox box(double lo, double hi, double min_side, double max_side) {
    const double w = real(min_side, max_side), h = real(min_side, max_side);
    const double x = real(lo, hi - w), y = real(lo, hi - h);
    return BBox(x, y, x + w, y + h);
  }

  // Box with corners on a coarse grid; produces exact ties and touching edges.
  BBox grid_box(int cells, int max_side) {
    const int w = integer(1, max_side), h = integer(1, max_side);
    const int x = integer(0, cells - w), y = integer(0, cells - h);
    return BBox(x, y, x + w, y + h);
  }

 private:
  std::uint64_t s_;
};

inline Detection det(double minx, double miny, double maxx, double maxy, double conf) {
  return make_detection(BBox(minx, miny, maxx, maxy), conf);
}

inline CrownLabel label(TreeId id, const BBox& b, std::optional<double> h = std::nullopt) {
  return CrownLabel{id, Polygon::rectangle(b), b, h, b.area()};
}

inline CrownLabel label(TreeId id, Polygon fp, std::optional<double> h = std::nullopt) {
  const BBox b = polygon_bbox(fp);
  const double a = polygon_area(fp);
  return CrownLabel{id, std::move(fp), b, h, a};
}

inline std::vector<Detection> as_detections(const std::vector<CrownLabel>& labels, double conf = 1.0) {
  std::vector<Detection> out;
  for (const auto& l : labels) out.push_back(make_detection(l.bbox, conf));
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("crownval-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Shared fixture

struct GoldenRun {
  std::vector<CrownLabel> labels;
  std::vector<Detection> raw;
  BBox plot{0, 0, 1, 1};
};

// Fixed synthetic run: labels from a generated scene, raw detections with
// duplicates so NMS matters.
inline GoldenRun golden_run() {
  synth::SynthSceneConfig sc;
  sc.seed = 2024;
  sc.n_trees = 9;
  sc.plot_side = 5;
  sc.points_per_tree = 2500;
  const auto scene = synth::generate_scene(sc);
  GoldenRun f;
  f.labels = generate_labels(scene.plot, LabelGenConfig{}).labels;
  f.plot = plot_extent(scene.plot);
  const auto base = synth::perturb_to_detections(f.labels, f.plot, 7, 0.8, 4, 0.08);
  Gen g(1);
  for (const auto& d : base.detections) {
    f.raw.push_back(d);
    for (int k = g.integer(0, 2); k > 0; --k) {
      const double j = 0.1;
      const auto b = BBox::try_make(d.bbox.minx() + g.real(-j, j), d.bbox.miny() + g.real(-j, j),
                                    d.bbox.maxx() + g.real(-j, j), d.bbox.maxy() + g.real(-j, j));
      if (b) f.raw.push_back(make_detection(*b, d.confidence * g.real(0.5, 1.0)));
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Oracles

namespace ref {

// IoU of integer-cornered boxes by counting unit cells.
inline double pixel_iou(const BBox& a, const BBox& b) {
  long inter = 0, uni = 0;
  const int lo = static_cast<int>(std::min(a.minx(), b.minx())) - 1;
  const int hi = static_cast<int>(std::max(a.maxx(), b.maxx())) + 1;
  const int ylo = static_cast<int>(std::min(a.miny(), b.miny())) - 1;
  const int yhi = static_cast<int>(std::max(a.maxy(), b.maxy())) + 1;
  for (int y = ylo; y < yhi; ++y) {
    for (int x = lo; x < hi; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      const bool ia = cx > a.minx() && cx < a.maxx() && cy > a.miny() && cy < a.maxy();
      const bool ib = cx > b.minx() && cx < b.maxx() && cy > b.miny() && cy < b.maxy();
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

inline double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.maxx(), b.maxx()) - std::max(a.minx(), b.minx());
  const double ih = std::min(a.maxy(), b.maxy()) - std::max(a.miny(), b.miny());
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// Ranking: confidence descending, then lexicographic box corners, then input
// position.
inline std::vector<std::size_t> ranking(const std::vector<Detection>& d) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = d[a];
    const auto& y = d[b];
    if (x.confidence != y.confidence) return x.confidence > y.confidence;
    return std::tuple(x.bbox.minx(), x.bbox.miny(), x.bbox.maxx(), x.bbox.maxy()) <
           std::tuple(y.bbox.minx(), y.bbox.miny(), y.bbox.maxx(), y.bbox.maxy());
  });
  return idx;
}

// Classic suppression loop: take the best remaining, delete everything it
// overlaps at or above the threshold, repeat.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double thr) {
  std::vector<std::size_t> remaining = ranking(dets);
  std::vector<Detection> kept;
  while (!remaining.empty()) {
    const Detection top = dets[remaining.front()];
    kept.push_back(top);
    std::vector<std::size_t> rest;
    for (std::size_t k = 1; k < remaining.size(); ++k) {
      if (!(iou(dets[remaining[k]].bbox, top.bbox) >= thr)) rest.push_back(remaining[k]);
    }
    remaining = std::move(rest);
  }
  return kept;
}

// True-positive flags in ranked order: each detection claims the unclaimed
// label of highest IoU (>= thr); ties to the smaller tree id.
inline std::vector<bool> tp_flags(const std::vector<Detection>& ranked,
                                  const std::vector<CrownLabel>& labels, double thr) {
  std::set<std::size_t> claimed;
  std::vector<bool> out;
  for (const auto& d : ranked) {
    std::optional<std::size_t> pick;
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (claimed.count(l)) continue;
      const double v = iou(d.bbox, labels[l].bbox);
      if (v < thr) continue;
      if (!pick) {
        pick = l;
        continue;
      }
      const double pv = iou(d.bbox, labels[*pick].bbox);
      if (v > pv || (v == pv && labels[l].tree_id < labels[*pick].tree_id)) pick = l;
    }
    if (pick) claimed.insert(*pick);
    out.push_back(pick.has_value());
  }
  return out;
}

inline std::vector<Detection> ranked(const std::vector<Detection>& d) {
  std::vector<Detection> out;
  for (auto i : ranking(d)) out.push_back(d[i]);
  return out;
}

// AP as the mean over ground truths of the best precision reached at or
// after the rank where each true positive occurs (missed ground truths add 0).
inline double average_precision(const std::vector<Detection>& dets,
                                const std::vector<CrownLabel>& labels, double thr) {
  const auto r = ranked(dets);
  const auto tp = tp_flags(r, labels, thr);
  std::vector<double> precision(r.size());
  int t = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    t += tp[k];
    precision[k] = static_cast<double>(t) / static_cast<double>(k + 1);
  }
  double sum = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!tp[k]) continue;
    double best = 0;
    for (std::size_t j = k; j < r.size(); ++j) best = std::max(best, precision[j]);
    sum += best;
  }
  return sum / static_cast<double>(labels.size());
}

// Exhaustive sweep: every distinct confidence cut, matching redone from
// scratch on the kept subset.
inline double max_f1(const std::vector<Detection>& dets, const std::vector<CrownLabel>& labels,
                     double thr) {
  std::set<double> cuts;
  for (const auto& d : dets) cuts.insert(d.confidence);
  double best = 0;
  for (double c : cuts) {
    std::vector<Detection> kept;
    for (const auto& d : dets) {
      if (d.confidence >= c) kept.push_back(d);
    }
    const auto tp = tp_flags(ranked(kept), labels, thr);
    const auto n_tp = static_cast<std::size_t>(std::count(tp.begin(), tp.end(), true));
    const double f1 = static_cast<double>(2 * n_tp) /
                      static_cast<double>(kept.size() + labels.size());
    best = std::max(best, f1);
  }
  return best;
}


// ---------------------------------------------------------------------------
// Raster oracles on global lattice cells

using Cell = std::pair<std::int64_t, std::int64_t>;

inline std::set<Cell> owned(const Grid<TreeId>& index, TreeId id) {
  std::set<Cell> out;
  for (std::int64_t r = 0; r < index.spec.nrows; ++r) {
    for (std::int64_t c = 0; c < index.spec.ncols; ++c) {
      if (index.at(c, r) == id) out.insert({index.spec.col0 + c, index.spec.row0 + r});
    }
  }
  return out;
}

// Non-empty cells keyed by global lattice cell.
inline std::map<Cell, TreeId> lattice_map(const Grid<TreeId>& g) {
  std::map<Cell, TreeId> out;
  for (std::int64_t r = 0; r < g.spec.nrows; ++r) {
    for (std::int64_t c = 0; c < g.spec.ncols; ++c) {
      if (g.at(c, r) != kNoTree) out[{g.spec.col0 + c, g.spec.row0 + r}] = g.at(c, r);
    }
  }
  return out;
}

// 4-connected components of `cells` by breadth-first search.
inline std::vector<std::set<Cell>> bfs(const std::set<Cell>& cells) {
  std::vector<std::set<Cell>> out;
  std::set<Cell> seen;
  for (const auto& start : cells) {
    if (seen.count(start)) continue;
    std::set<Cell> comp;
    std::queue<Cell> q;
    q.push(start);
    seen.insert(start);
    while (!q.empty()) {
      const auto [x, y] = q.front();
      q.pop();
      comp.insert({x, y});
      const Cell nb[4] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
      for (const auto& n : nb) {
        if (!cells.count(n) || seen.count(n)) continue;
        seen.insert(n);
        q.push(n);
      }
    }
    out.push_back(std::move(comp));
  }
  return out;
}

// 4-connected same-id components of a grid.
inline std::vector<std::pair<TreeId, std::set<Cell>>> components(const Grid<TreeId>& g) {
  std::map<TreeId, std::set<Cell>> by_id;
  for (const auto& [cell, id] : lattice_map(g)) by_id[id].insert(cell);
  std::vector<std::pair<TreeId, std::set<Cell>>> out;
  for (const auto& [id, cells] : by_id) {
    for (auto& c : bfs(cells)) out.emplace_back(id, std::move(c));
  }
  return out;
}

// Component plus the cells it encloses: background cells of its padded box
// that are not 4-connected to the border. Exterior rings stay simple, so a
// pocket that opens only through a diagonal gap counts as enclosed.
inline std::size_t filled_count(const std::set<Cell>& comp) {
  std::int64_t c0 = comp.begin()->first, c1 = c0, r0 = comp.begin()->second, r1 = r0;
  for (const auto& [c, r] : comp) {
    c0 = std::min(c0, c);
    c1 = std::max(c1, c);
    r0 = std::min(r0, r);
    r1 = std::max(r1, r);
  }
  std::set<Cell> background;
  for (auto r = r0 - 1; r <= r1 + 1; ++r) {
    for (auto c = c0 - 1; c <= c1 + 1; ++c) {
      if (!comp.count({c, r})) background.insert({c, r});
    }
  }
  std::size_t holes = 0;
  for (const auto& b : bfs(background)) {
    if (!b.count({c0 - 1, r0 - 1})) holes += b.size();
  }
  return comp.size() + holes;
}

// Filled pixel count of the component a tree's label is drawn from: most
// pixels, ties to the smaller lower-left corner (column, then row).
inline std::optional<std::size_t> footprint_pixels(const Grid<TreeId>& g, TreeId id) {
  const std::set<Cell>* best = nullptr;
  Cell best_corner{};
  const auto comps = components(g);
  for (const auto& [cid, comp] : comps) {
    if (cid != id) continue;
    Cell corner{comp.begin()->first, comp.begin()->second};
    for (const auto& [c, r] : comp) corner = {std::min(corner.first, c), std::min(corner.second, r)};
    if (!best || comp.size() > best->size() || (comp.size() == best->size() && corner < best_corner)) {
      best = &comp;
      best_corner = corner;
    }
  }
  if (!best) return std::nullopt;
  return filled_count(*best);
}

}  // namespace ref
}  // namespace testing_support
