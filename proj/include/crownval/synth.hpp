#pragma once

// Synthetic segmented forests with analytically known crowns, an independent
// brute-force tallest-tree map, and controlled detection perturbation.
//
// Random numbers come from std::mt19937_64, whose output sequence is fixed by
// the C++ standard, converted to doubles by hand ((bits >> 11) * 2^-53) rather
// than through std:: distributions, whose algorithms are implementation
// defined. Tree k draws from its own engine seeded with
// splitmix64(master_seed + k), so scenes are bit-identical across platforms
// and independent of generation order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "crownval/error.hpp"
#include "crownval/geom.hpp"
#include "crownval/labelgen.hpp"
#include "crownval/pointcloud.hpp"
#include "crownval/predictions.hpp"
#include "crownval/raster.hpp"

namespace crownval::synth {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

enum class CrownShape { cone, paraboloid };

inline std::string to_string(CrownShape s) { return s == CrownShape::cone ? "cone" : "paraboloid"; }

inline CrownShape parse_shape(const std::string& s) {
  if (s == "cone") return CrownShape::cone;
  if (s == "paraboloid") return CrownShape::paraboloid;
  throw Error("unknown crown shape '" + s + "'");
}

struct SynthSceneConfig {
  std::uint64_t seed = 1;
  int n_trees = 6;
  double plot_side = 4.0;  // meters
  CrownShape shape = CrownShape::cone;
  double height_min = 5.0, height_max = 20.0;
  double radius_min = 0.3, radius_max = 0.8;
  int points_per_tree = 5000;
  double overlap = 0.3;           // 0: crowns kept apart, 1: crowns may coincide
  double crown_depth_ratio = 0.4; // crown depth as a fraction of tree height

  void validate() const {
    if (n_trees < 1) throw Error("n_trees must be >= 1");
    if (points_per_tree < 1) throw Error("points per tree must be >= 1");
    if (!(plot_side > 0)) throw Error("plot side must be > 0");
    if (!(height_min > 0) || height_max < height_min) throw Error("invalid height range");
    if (!(radius_min > 0) || radius_max < radius_min) throw Error("invalid crown radius range");
    if (!(plot_side > 2 * radius_max)) throw Error("plot side must exceed the largest crown diameter");
    if (!(overlap >= 0 && overlap <= 1)) throw Error("overlap intensity must be in [0, 1]");
    if (!(crown_depth_ratio > 0 && crown_depth_ratio <= 1)) throw Error("crown depth ratio must be in (0, 1]");
  }
};

/// Analytic crown: rotationally symmetric surface peaking at `height`.
struct TreeTruth {
  TreeId id = 0;
  double cx = 0, cy = 0;
  double height = 0;
  double radius = 0;
  double crown_depth = 0;
  CrownShape shape = CrownShape::cone;

  /// Crown surface height at distance r from the stem (r <= radius).
  double surface(double r) const {
    const double t = std::clamp(r / radius, 0.0, 1.0);
    return height - crown_depth * (shape == CrownShape::cone ? t : t * t);
  }
};

struct SynthTruth {
  std::vector<TreeTruth> trees;
};

/// Minimum stem spacing that keeps zero-overlap crowns apart at pixel scale.
inline constexpr double kSeparationMargin = 0.1;

inline std::vector<Point3D> sample_tree(const TreeTruth& t, int n_points, Rng& rng) {
  std::vector<Point3D> pts;
  pts.reserve(static_cast<std::size_t>(n_points));
  const int n_stem = std::max(1, n_points / 20);
  const int n_inner = n_points / 5;
  const int n_surface = std::max(1, n_points - n_stem - n_inner);
  const double two_pi = 2 * std::numbers::pi;
  for (int i = 0; i < n_surface + n_inner; ++i) {
    const double r = t.radius * std::sqrt(rng.uniform());
    const double a = two_pi * rng.uniform();
    double z = t.surface(r);
    if (i >= n_surface) z -= 0.5 * t.crown_depth * rng.uniform();
    pts.push_back({t.cx + r * std::cos(a), t.cy + r * std::sin(a), z});
  }
  const double stem_top = t.height - t.crown_depth;
  for (int i = 0; i < n_stem; ++i) {
    pts.push_back({t.cx + rng.uniform(-0.05, 0.05), t.cy + rng.uniform(-0.05, 0.05),
                   rng.uniform(0.0, stem_top)});
  }
  return pts;
}

struct Scene {
  PlotCloudSet plot;
  SynthTruth truth;
};

inline Scene generate_scene(const SynthSceneConfig& cfg) {
  cfg.validate();
  Rng placement(splitmix64(cfg.seed));
  SynthTruth truth;
  for (int k = 0; k < cfg.n_trees; ++k) {
    TreeTruth t;
    t.id = k + 1;
    t.shape = cfg.shape;
    t.radius = placement.uniform(cfg.radius_min, cfg.radius_max);
    t.height = placement.uniform(cfg.height_min, cfg.height_max);
    t.crown_depth = cfg.crown_depth_ratio * t.height;
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      t.cx = placement.uniform(t.radius, cfg.plot_side - t.radius);
      t.cy = placement.uniform(t.radius, cfg.plot_side - t.radius);
      placed = std::all_of(truth.trees.begin(), truth.trees.end(), [&](const TreeTruth& o) {
        const double need = (1.0 - cfg.overlap) * (t.radius + o.radius) +
                            (cfg.overlap == 0 ? kSeparationMargin : 0.0);
        return std::hypot(t.cx - o.cx, t.cy - o.cy) >= need;
      });
    }
    if (!placed) throw Error("cannot place tree " + std::to_string(t.id) + ": plot too crowded");
    truth.trees.push_back(t);
  }
  std::vector<TreeCloud> clouds;
  for (std::size_t k = 0; k < truth.trees.size(); ++k) {
    Rng rng(splitmix64(cfg.seed + 1 + k));
    clouds.push_back({truth.trees[k].id, sample_tree(truth.trees[k], cfg.points_per_tree, rng)});
  }
  return Scene{make_plot("synth-" + std::to_string(cfg.seed), std::move(clouds)), std::move(truth)};
}

/// Tall tree sampled at every pixel of its crown, with a shorter tree whose
/// whole crown (plus the gap-fill reach) lies below the tall crown surface.
/// Tree 2 is occluded by construction.
inline Scene generate_occlusion_scene(std::uint64_t seed, double resolution, int fill_window = 1) {
  Rng rng(splitmix64(seed ^ 0x6f63636cULL));
  TreeTruth tall{1, 2.0, 2.0, rng.uniform(15.0, 25.0), rng.uniform(1.2, 1.8), 0, CrownShape::cone};
  tall.crown_depth = 0.5 * tall.height;
  const double reach = (fill_window + 2) * resolution * std::numbers::sqrt2;
  const double rho = rng.uniform(0.1, 0.3) * tall.radius;
  const double d = rng.uniform(0.0, 0.3) * tall.radius;
  const double a = 2 * std::numbers::pi * rng.uniform();
  const double cover = tall.surface(d + rho + reach);
  TreeTruth shortt{2, tall.cx + d * std::cos(a), tall.cy + d * std::sin(a), 0, rho, 0,
                   rng.bits() % 2 ? CrownShape::cone : CrownShape::paraboloid};
  shortt.height = rng.uniform(0.5, 0.9) * (cover - 0.5);
  shortt.crown_depth = 0.5 * shortt.height;

  // Dense sampling: one point per lattice cell of the tall crown disc.
  std::vector<Point3D> tall_pts;
  const auto c0 = lattice_index(tall.cx - tall.radius, resolution);
  const auto c1 = lattice_index(tall.cx + tall.radius, resolution);
  const auto r0 = lattice_index(tall.cy - tall.radius, resolution);
  const auto r1 = lattice_index(tall.cy + tall.radius, resolution);
  for (auto r = r0; r <= r1; ++r) {
    for (auto c = c0; c <= c1; ++c) {
      const double x = (static_cast<double>(c) + rng.uniform(0.25, 0.75)) * resolution;
      const double y = (static_cast<double>(r) + rng.uniform(0.25, 0.75)) * resolution;
      const double dist = std::hypot(x - tall.cx, y - tall.cy);
      if (dist <= tall.radius) tall_pts.push_back({x, y, tall.surface(dist)});
    }
  }
  auto short_pts = sample_tree(shortt, 3000, rng);
  std::vector<TreeCloud> clouds{{1, std::move(tall_pts)}, {2, std::move(short_pts)}};
  return Scene{make_plot("occlusion-" + std::to_string(seed), std::move(clouds)),
               SynthTruth{{tall, shortt}}};
}

/// Tallest-tree map computed directly from the points: per-tree sparse max
/// binning, the same single-pass window fill restricted to each tree's own
/// cell bounds, then a per-pixel argmax with ties to the smaller id. Shares
/// nothing with the label generator except lattice_index.
inline Grid<TreeId> brute_force_index_map(const PlotCloudSet& plot, double resolution,
                                          int fill_window) {
  using Cell = std::pair<std::int64_t, std::int64_t>;
  std::map<Cell, std::pair<double, TreeId>> top;
  std::int64_t gc0 = INT64_MAX, gr0 = INT64_MAX, gc1 = INT64_MIN, gr1 = INT64_MIN;
  for (const auto& tree : plot.trees) {
    std::map<Cell, double> cells;
    std::int64_t c0 = INT64_MAX, r0 = INT64_MAX, c1 = INT64_MIN, r1 = INT64_MIN;
    for (const auto& p : tree.points) {
      const Cell k{lattice_index(p.x, resolution), lattice_index(p.y, resolution)};
      auto [it, fresh] = cells.try_emplace(k, p.z);
      if (!fresh && p.z > it->second) it->second = p.z;
      c0 = std::min(c0, k.first);
      c1 = std::max(c1, k.first);
      r0 = std::min(r0, k.second);
      r1 = std::max(r1, k.second);
    }
    gc0 = std::min(gc0, c0);
    gc1 = std::max(gc1, c1);
    gr0 = std::min(gr0, r0);
    gr1 = std::max(gr1, r1);
    std::map<Cell, double> filled = cells;
    if (fill_window > 0) {
      for (auto r = r0; r <= r1; ++r) {
        for (auto c = c0; c <= c1; ++c) {
          if (cells.count({c, r})) continue;
          std::optional<double> best;
          for (auto dr = -fill_window; dr <= fill_window; ++dr) {
            for (auto dc = -fill_window; dc <= fill_window; ++dc) {
              const auto it = cells.find({c + dc, r + dr});
              if (it != cells.end() && (!best || it->second > *best)) best = it->second;
            }
          }
          if (best) filled[{c, r}] = *best;
        }
      }
    }
    for (const auto& [k, h] : filled) {
      auto [it, fresh] = top.try_emplace(k, h, tree.id);
      if (fresh) continue;
      auto& [th, tid] = it->second;
      if (h > th || (h == th && tree.id < tid)) {
        th = h;
        tid = tree.id;
      }
    }
  }
  Grid<TreeId> map(GridSpec::from_lattice(gc0, gr0, gc1 - gc0 + 1, gr1 - gr0 + 1, resolution), kNoTree);
  for (const auto& [k, v] : top) map.at(k.first - gc0, k.second - gr0) = v.second;
  return map;
}

// ---------------------------------------------------------------------------
// Detection perturbation

struct ConfidenceModel {
  double tp_lo = 0.3, tp_hi = 1.0;
  double fp_lo = 0.0, fp_hi = 0.7;
};

enum class DetectionKind { true_positive, false_positive };

struct DetectionRecord {
  DetectionKind kind;
  std::optional<TreeId> source;  // label a true positive was derived from
};

struct PerturbedDetections {
  std::vector<Detection> detections;
  std::vector<DetectionRecord> records;  // parallel to detections
  std::vector<TreeId> missed;            // labels with no detection (false negatives)

  std::size_t true_positives() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) {
      return r.kind == DetectionKind::true_positive;
    }));
  }
};

/// Turns labels into detections with known outcome at IoU 0.5. Each label is
/// kept with probability tp_rate; its box is jittered by up to `jitter` per
/// edge and resampled until IoU with its source is >= 0.5 and IoU with every
/// other label is < 0.5. False positives are placed anywhere in `extent` with
/// IoU < 0.5 against every label. Labels that cannot be jittered validly in
/// 1000 attempts count as missed.
inline PerturbedDetections perturb_to_detections(std::span<const CrownLabel> labels,
                                                 const BBox& extent, std::uint64_t seed,
                                                 double tp_rate, int fp_count, double jitter,
                                                 const ConfidenceModel& conf = {}) {
  if (!(tp_rate >= 0 && tp_rate <= 1)) throw Error("tp rate must be in [0, 1]");
  if (fp_count < 0) throw Error("fp count must be >= 0");
  if (!(jitter >= 0)) throw Error("jitter must be >= 0");
  Rng rng(splitmix64(seed ^ 0x64657473ULL));
  PerturbedDetections out;
  auto max_other_iou = [&](const BBox& b, std::optional<std::size_t> skip) {
    double m = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (skip && *skip == i) continue;
      m = std::max(m, bbox_iou(b, labels[i].bbox));
    }
    return m;
  };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BBox& src = labels[i].bbox;
    if (!(rng.uniform() < tp_rate)) {
      out.missed.push_back(labels[i].tree_id);
      continue;
    }
    std::optional<BBox> box;
    for (int attempt = 0; attempt < 1000 && !box; ++attempt) {
      auto b = BBox::try_make(src.minx() + rng.uniform(-jitter, jitter),
                              src.miny() + rng.uniform(-jitter, jitter),
                              src.maxx() + rng.uniform(-jitter, jitter),
                              src.maxy() + rng.uniform(-jitter, jitter));
      if (b && bbox_iou(*b, src) >= 0.5 && max_other_iou(*b, i) < 0.5) box = b;
    }
    if (!box) {
      out.missed.push_back(labels[i].tree_id);
      continue;
    }
    out.detections.push_back(make_detection(*box, rng.uniform(conf.tp_lo, conf.tp_hi)));
    out.records.push_back({DetectionKind::true_positive, labels[i].tree_id});
  }
  for (int k = 0; k < fp_count; ++k) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      double w = rng.uniform(0.3, 1.5), h = rng.uniform(0.3, 1.5);
      if (!labels.empty()) {
        const auto& ref = labels[static_cast<std::size_t>(rng.bits() % labels.size())].bbox;
        w = ref.width() * rng.uniform(0.5, 1.5);
        h = ref.height() * rng.uniform(0.5, 1.5);
      }
      w = std::min(w, extent.width());
      h = std::min(h, extent.height());
      const double x = rng.uniform(extent.minx(), extent.maxx() - w);
      const double y = rng.uniform(extent.miny(), extent.maxy() - h);
      const auto b = BBox::try_make(x, y, x + w, y + h);
      if (!b || max_other_iou(*b, std::nullopt) >= 0.5) continue;
      out.detections.push_back(make_detection(*b, rng.uniform(conf.fp_lo, conf.fp_hi)));
      out.records.push_back({DetectionKind::false_positive, std::nullopt});
      break;
    }
  }
  return out;
}

inline nlohmann::json truth_to_json(const SynthSceneConfig& cfg, const SynthTruth& truth,
                                    const PerturbedDetections* dets) {
  using nlohmann::json;
  json trees = json::array();
  for (const auto& t : truth.trees) {
    trees.push_back({{"tree_id", t.id},
                     {"cx", t.cx},
                     {"cy", t.cy},
                     {"height", t.height},
                     {"radius", t.radius},
                     {"crown_depth", t.crown_depth},
                     {"shape", to_string(t.shape)}});
  }
  json doc = {{"config",
               {{"seed", cfg.seed},
                {"n_trees", cfg.n_trees},
                {"plot_side", cfg.plot_side},
                {"shape", to_string(cfg.shape)},
                {"height_range", {cfg.height_min, cfg.height_max}},
                {"radius_range", {cfg.radius_min, cfg.radius_max}},
                {"points_per_tree", cfg.points_per_tree},
                {"overlap", cfg.overlap},
                {"crown_depth_ratio", cfg.crown_depth_ratio}}},
              {"trees", std::move(trees)}};
  if (dets) {
    json recs = json::array();
    for (const auto& r : dets->records) {
      recs.push_back({{"kind", r.kind == DetectionKind::true_positive ? "tp" : "fp"},
                      {"source", r.source ? json(*r.source) : json(nullptr)}});
    }
    doc["detections"] = {{"records", std::move(recs)},
                         {"missed", dets->missed},
                         {"true_positives", dets->true_positives()}};
  }
  return doc;
}

}  // namespace crownval::synth
