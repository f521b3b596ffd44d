#pragma once

// External detections: ingestion, tiling layout, non-maximum suppression, and
// the merge/clip post-processing applied before scoring.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "crownval/error.hpp"
#include "crownval/geom.hpp"
#include "crownval/labels_io.hpp"
#include "crownval/textio.hpp"

namespace crownval {

struct Detection {
  BBox bbox;
  double confidence = 0;
  std::optional<Polygon> footprint;
  std::optional<double> assigned_height;
  std::optional<std::size_t> tile;  // producing tile, when known

  bool operator==(const Detection&) const = default;
};

inline Detection make_detection(const BBox& bbox, double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw Error("confidence " + std::to_string(confidence) + " outside [0, 1]");
  }
  return Detection{bbox, confidence, std::nullopt, std::nullopt, std::nullopt};
}

enum class NmsScope { global, tile };

struct TilingConfig {
  double tile_size = 0;     // meters
  double overlap = 0.5;     // relative overlap between neighbouring tiles
  double nms_iou = 0.5;     // suppression threshold
  NmsScope scope = NmsScope::global;

  void validate() const {
    if (!(tile_size > 0) || !std::isfinite(tile_size)) throw Error("tile size must be > 0");
    if (!(overlap >= 0 && overlap < 1)) throw Error("overlap must be in [0, 1)");
    if (!(nms_iou > 0 && nms_iou < 1)) throw Error("NMS IoU must be in (0, 1)");
  }
};

/// Tile size given in pixels at a ground sample distance (m/px).
inline double tile_size_from_pixels(double pixels, double gsd) {
  if (!(pixels > 0) || !(gsd > 0)) throw Error("tile pixels and GSD must be > 0");
  return pixels * gsd;
}

namespace detail {

inline std::vector<std::pair<double, double>> tile_spans(double lo, double hi, double size,
                                                         double stride) {
  if (size >= hi - lo) return {{lo, hi}};
  std::vector<std::pair<double, double>> spans;
  for (std::size_t k = 0;; ++k) {
    const double start = lo + static_cast<double>(k) * stride;
    if (!(start + size < hi)) break;
    spans.emplace_back(start, start + size);
  }
  spans.emplace_back(hi - size, hi);
  return spans;
}

}  // namespace detail

/// Square tiles of side tile_size at stride tile_size * (1 - overlap), from the
/// extent's min corner; the last row and column are shifted inward so tiles
/// never leave the extent. Row-major from the bottom-left tile.
inline std::vector<BBox> make_tiles(const BBox& extent, double tile_size, double overlap) {
  TilingConfig{tile_size, overlap, 0.5}.validate();
  const double stride = tile_size * (1.0 - overlap);
  const auto xs = detail::tile_spans(extent.minx(), extent.maxx(), tile_size, stride);
  const auto ys = detail::tile_spans(extent.miny(), extent.maxy(), tile_size, stride);
  std::vector<BBox> tiles;
  tiles.reserve(xs.size() * ys.size());
  for (const auto& [y0, y1] : ys) {
    for (const auto& [x0, x1] : xs) tiles.emplace_back(x0, y0, x1, y1);
  }
  return tiles;
}

/// Confidence-descending order; ties by bbox corners, then input position.
inline bool detection_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  const auto ka = std::tuple(a.bbox.minx(), a.bbox.miny(), a.bbox.maxx(), a.bbox.maxy());
  const auto kb = std::tuple(b.bbox.minx(), b.bbox.miny(), b.bbox.maxx(), b.bbox.maxy());
  return ka < kb;
}

inline std::vector<Detection> sort_detections(std::span<const Detection> dets) {
  std::vector<Detection> out(dets.begin(), dets.end());
  std::stable_sort(out.begin(), out.end(), detection_before);
  return out;
}

/// Greedy NMS: a detection is kept when its IoU with every previously kept
/// detection is below the threshold. Output is confidence-descending.
inline std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  if (!(iou_threshold > 0 && iou_threshold < 1)) throw Error("NMS IoU must be in (0, 1)");
  std::vector<Detection> kept;
  for (auto& d : sort_detections(dets)) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return bbox_iou(k.bbox, d.bbox) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

/// Clips a detection to the plot; nullopt when nothing remains. A footprint
/// that no longer fits the clipped box is dropped (scoring uses boxes only).
inline std::optional<Detection> clip_detection(const Detection& d, const BBox& plot) {
  const auto clipped = clip_bbox(d.bbox, plot);
  if (!clipped) return std::nullopt;
  Detection out = d;
  out.bbox = *clipped;
  if (out.footprint && !clipped->contains(polygon_bbox(*out.footprint))) out.footprint.reset();
  return out;
}

struct TileDetections {
  BBox tile;
  std::vector<Detection> detections;
};

/// Pools tiled detections, suppresses duplicates, then clips to the plot.
/// Clipping happens last, after all other post-processing.
inline std::vector<Detection> merge_tiled(std::span<const TileDetections> per_tile,
                                          const TilingConfig& cfg, const BBox& plot) {
  std::vector<Detection> pooled;
  if (cfg.scope == NmsScope::tile) {
    for (const auto& t : per_tile) {
      auto kept = nms(t.detections, cfg.nms_iou);
      pooled.insert(pooled.end(), kept.begin(), kept.end());
    }
    pooled = sort_detections(pooled);
  } else {
    for (const auto& t : per_tile) {
      pooled.insert(pooled.end(), t.detections.begin(), t.detections.end());
    }
    pooled = nms(pooled, cfg.nms_iou);
  }
  std::vector<Detection> out;
  out.reserve(pooled.size());
  for (const auto& d : pooled) {
    if (auto c = clip_detection(d, plot)) out.push_back(std::move(*c));
  }
  return out;
}

/// Groups detections by producing tile. Detections carrying a tile index use
/// it; the rest go to the first tile containing their box centre, or the
/// nearest tile when no tile contains it.
inline std::vector<TileDetections> group_by_tile(std::span<const Detection> dets,
                                                 std::span<const BBox> tiles) {
  if (tiles.empty()) throw Error("no tiles");
  std::vector<TileDetections> out;
  out.reserve(tiles.size());
  for (const auto& t : tiles) out.push_back({t, {}});
  for (const auto& d : dets) {
    std::size_t idx = 0;
    if (d.tile) {
      if (*d.tile >= tiles.size()) throw Error("detection tile index out of range");
      idx = *d.tile;
    } else {
      const Vec2 c{0.5 * (d.bbox.minx() + d.bbox.maxx()), 0.5 * (d.bbox.miny() + d.bbox.maxy())};
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < tiles.size(); ++i) {
        const double dx = std::max({tiles[i].minx() - c.x, 0.0, c.x - tiles[i].maxx()});
        const double dy = std::max({tiles[i].miny() - c.y, 0.0, c.y - tiles[i].maxy()});
        const double dist = dx * dx + dy * dy;
        if (dist < best) {
          best = dist;
          idx = i;
        }
        if (dist == 0) break;
      }
    }
    out[idx].detections.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Readers and writers

inline std::vector<Detection> read_detections_csv(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  const auto rows = text::lines(content);
  if (rows.empty()) throw ParseError(path.string(), 1, "missing header");
  const auto header = text::split(rows.front(), ',');
  auto find = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  std::size_t cols[5];
  const char* names[5] = {"minx", "miny", "maxx", "maxy", "confidence"};
  for (int i = 0; i < 5; ++i) {
    const auto c = find(names[i]);
    if (!c) throw ParseError(path.string(), 1, std::string("missing column '") + names[i] + "'");
    cols[i] = *c;
  }
  const auto tile_col = find("tile_id");
  std::vector<Detection> dets;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto line = text::trim(rows[i]);
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    double v[5];
    for (int k = 0; k < 5; ++k) {
      if (cols[k] >= f.size()) throw ParseError(path.string(), i + 1, "too few columns");
      const auto parsed = text::parse_double(f[cols[k]]);
      if (!parsed) throw ParseError(path.string(), i + 1, std::string("non-numeric ") + names[k]);
      v[k] = *parsed;
    }
    const auto box = BBox::try_make(v[0], v[1], v[2], v[3]);
    if (!box) throw ParseError(path.string(), i + 1, "degenerate bounding box");
    if (!(v[4] >= 0.0 && v[4] <= 1.0)) {
      throw ParseError(path.string(), i + 1, "confidence outside [0, 1]");
    }
    Detection d = make_detection(*box, v[4]);
    if (tile_col && *tile_col < f.size() && !f[*tile_col].empty()) {
      const auto t = text::parse_int(f[*tile_col]);
      if (!t || *t < 0) throw ParseError(path.string(), i + 1, "invalid tile_id");
      d.tile = static_cast<std::size_t>(*t);
    }
    dets.push_back(std::move(d));
  }
  return dets;
}

/// FeatureCollection with a numeric `confidence` property. Geometry is a
/// Polygon (its bounds become the box) or null with a feature-level "bbox".
inline std::vector<Detection> read_detections_geojson(const std::filesystem::path& path) {
  using geojson::json;
  const auto doc = geojson::parse(text::read_file(path), path.string());
  const auto& features = geojson::features_of(doc, path.string());
  std::vector<Detection> dets;
  std::size_t n = 0;
  for (const auto& f : features) {
    ++n;
    const auto& props = f.contains("properties") ? f["properties"] : json::object();
    if (!props.is_object() || !props.contains("confidence") || !props["confidence"].is_number()) {
      throw ParseError(path.string(), n, "feature lacks numeric confidence");
    }
    const double conf = props["confidence"].get<double>();
    if (!(conf >= 0.0 && conf <= 1.0)) {
      throw ParseError(path.string(), n, "confidence outside [0, 1]");
    }
    try {
      if (f.contains("geometry") && !f["geometry"].is_null()) {
        Polygon poly = geojson::polygon_from_json(f["geometry"]);
        Detection d = make_detection(polygon_bbox(poly), conf);
        d.footprint = std::move(poly);
        dets.push_back(std::move(d));
      } else if (f.contains("bbox") && f["bbox"].is_array() && f["bbox"].size() == 4) {
        const auto& b = f["bbox"];
        dets.push_back(make_detection(
            BBox(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()),
            conf));
      } else {
        throw Error("feature has neither geometry nor bbox");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(path.string(), n, std::string("malformed geometry: ") + e.what());
    }
  }
  return dets;
}

inline std::vector<Detection> read_detections(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".json" || ext == ".geojson") return read_detections_geojson(path);
  return read_detections_csv(path);
}

inline std::string detections_to_csv(std::span<const Detection> dets) {
  std::string out = "minx,miny,maxx,maxy,confidence\n";
  for (const auto& d : dets) {
    out += text::exact(d.bbox.minx()) + ',' + text::exact(d.bbox.miny()) + ',' +
           text::exact(d.bbox.maxx()) + ',' + text::exact(d.bbox.maxy()) + ',' +
           text::exact(d.confidence) + '\n';
  }
  return out;
}

inline void write_detections_csv(const std::filesystem::path& path,
                                 std::span<const Detection> dets) {
  text::write_file(path, detections_to_csv(dets));
}

}  // namespace crownval
