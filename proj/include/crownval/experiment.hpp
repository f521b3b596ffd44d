#pragma once

// Tile-size x NMS-IoU gridsearch, best-cell selection, plot summaries and
// report files.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crownval/error.hpp"
#include "crownval/labelgen.hpp"
#include "crownval/metrics.hpp"
#include "crownval/parallel.hpp"
#include "crownval/predictions.hpp"
#include "crownval/svg.hpp"
#include "crownval/textio.hpp"

namespace crownval {

struct GridSearchSpec {
  std::vector<double> tile_sizes;  // meters
  std::vector<double> nms_ious;
  double overlap = 0.5;
  NmsScope scope = NmsScope::global;

  void validate() const {
    if (tile_sizes.empty() || nms_ious.empty()) throw Error("gridsearch needs tile sizes and NMS IoUs");
    for (double t : tile_sizes) {
      for (double n : nms_ious) TilingConfig{t, overlap, n, scope}.validate();
    }
  }
};

struct GridCell {
  double tile_size = 0;
  double nms_iou = 0;
  std::optional<EvalResult> result;  // nullopt: no detections for this cell
  std::size_t n_detections = 0;

  bool present() const { return result.has_value(); }
};

/// Merged detections for one (tile size, NMS IoU) cell, or nullopt if the
/// cell has no detection set.
using CellDetections =
    std::function<std::optional<std::vector<Detection>>(double tile_size, double nms_iou)>;

/// Raw (pre-NMS) detections per tile size, merged per cell with merge_tiled.
inline CellDetections tiled_source(std::map<double, std::vector<Detection>> raw_by_tile_size,
                                   const BBox& plot, const GridSearchSpec& spec) {
  return [raw = std::move(raw_by_tile_size), plot, spec](
             double tile, double nms_iou) -> std::optional<std::vector<Detection>> {
    const auto it = raw.find(tile);
    if (it == raw.end()) return std::nullopt;
    const auto tiles = make_tiles(plot, tile, spec.overlap);
    const auto grouped = group_by_tile(it->second, tiles);
    return merge_tiled(grouped, TilingConfig{tile, spec.overlap, nms_iou, spec.scope}, plot);
  };
}

/// One pooled raw detection set re-merged for every cell.
inline CellDetections pooled_source(std::vector<Detection> raw, const BBox& plot,
                                    const GridSearchSpec& spec) {
  std::map<double, std::vector<Detection>> by_tile;
  for (double t : spec.tile_sizes) by_tile[t] = raw;
  return tiled_source(std::move(by_tile), plot, spec);
}

/// Evaluates every cell independently; cells are ordered tile-major.
inline std::vector<GridCell> run_gridsearch(const CellDetections& source,
                                            std::span<const CrownLabel> labels,
                                            const GridSearchSpec& spec, const EvalConfig& cfg,
                                            unsigned threads = 1) {
  spec.validate();
  cfg.validate();
  std::vector<GridCell> cells;
  for (double t : spec.tile_sizes) {
    for (double n : spec.nms_ious) cells.push_back(GridCell{t, n, std::nullopt, 0});
  }
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    auto dets = source(cells[i].tile_size, cells[i].nms_iou);
    if (!dets) return;
    cells[i].n_detections = dets->size();
    cells[i].result = evaluate(*dets, labels, cfg);
  });
  return cells;
}

inline std::optional<double> ap_at(const EvalResult& r, std::string_view stratum, double iou) {
  const auto* t = r.find(stratum, iou);
  return t ? t->ap : std::nullopt;
}

/// Largest label bbox side: the smallest tile that fits every crown.
inline double default_min_tile_size(std::span<const CrownLabel> labels) {
  double side = 0;
  for (const auto& l : labels) side = std::max({side, l.bbox.width(), l.bbox.height()});
  return side;
}

/// Present cell with the best all-stratum AP50 among cells whose tile is at
/// least min_tile_size. Ties go to the larger tile, then the lower NMS IoU.
inline const GridCell& select_best(std::span<const GridCell> cells, double min_tile_size) {
  const GridCell* best = nullptr;
  double best_ap = 0;
  bool any_present = false;
  for (const auto& c : cells) {
    if (!c.present()) continue;
    any_present = true;
    if (c.tile_size < min_tile_size) continue;
    const auto ap = ap_at(*c.result, "all", 0.5);
    if (!ap) continue;
    const bool better =
        !best || *ap > best_ap ||
        (*ap == best_ap && (c.tile_size > best->tile_size ||
                            (c.tile_size == best->tile_size && c.nms_iou < best->nms_iou)));
    if (better) {
      best = &c;
      best_ap = *ap;
    }
  }
  if (!any_present) throw Error("every gridsearch cell is absent");
  if (!best) {
    throw Error("no gridsearch cell with a defined AP50 and tile size >= " +
                text::fixed6(min_tile_size));
  }
  return *best;
}

inline const GridCell& select_best(std::span<const GridCell> cells,
                                   std::span<const CrownLabel> labels) {
  return select_best(cells, default_min_tile_size(labels));
}

// ---------------------------------------------------------------------------
// Plot summaries

struct PlotSummary {
  std::string plot_id;
  std::size_t total_crowns = 0;
  double max_crown_area = 0;  // m^2
  double avg_crown_area = 0;  // m^2
  std::optional<std::pair<std::int64_t, std::int64_t>> orthomosaic_dims;  // px
  std::optional<double> gsd_cm;  // cm per px
};

inline PlotSummary summarize_labels(std::span<const CrownLabel> labels, std::string plot_id,
                                    std::optional<double> gsd_cm = std::nullopt) {
  if (labels.empty()) throw Error("no labels to summarise");
  PlotSummary s;
  s.plot_id = std::move(plot_id);
  s.total_crowns = labels.size();
  double sum = 0;
  for (const auto& l : labels) {
    s.max_crown_area = std::max(s.max_crown_area, l.area);
    sum += l.area;
  }
  s.avg_crown_area = sum / static_cast<double>(labels.size());
  s.gsd_cm = gsd_cm;
  return s;
}

/// Tabular row: "FIN01 & 47 & 30.6 / 14.0 & 13893$\times$19153 & 1.2".
inline std::string format_summary_row(const PlotSummary& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s & %zu & %.1f / %.1f", s.plot_id.c_str(), s.total_crowns,
                s.max_crown_area, s.avg_crown_area);
  std::string row = buf;
  if (s.orthomosaic_dims) {
    row += " & " + std::to_string(s.orthomosaic_dims->first) + "$\\times$" +
           std::to_string(s.orthomosaic_dims->second);
  }
  if (s.gsd_cm) {
    std::snprintf(buf, sizeof buf, " & %.1f", *s.gsd_cm);
    row += buf;
  }
  return row;
}

inline std::string summary_csv(std::span<const PlotSummary> rows) {
  std::string out = "plot,total_crowns,max_crown_area_m2,avg_crown_area_m2,orthomosaic_dims,gsd_cm_per_px\n";
  for (const auto& s : rows) {
    out += s.plot_id + ',' + std::to_string(s.total_crowns) + ',' + text::fixed6(s.max_crown_area) +
           ',' + text::fixed6(s.avg_crown_area) + ',' +
           (s.orthomosaic_dims ? std::to_string(s.orthomosaic_dims->first) + "x" +
                                     std::to_string(s.orthomosaic_dims->second)
                               : std::string()) +
           ',' + (s.gsd_cm ? text::fixed6(*s.gsd_cm) : std::string()) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct ReportMeta {
  std::string site = "plot";
  std::string model = "model";
};

inline std::string iou_tag(double iou) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", iou);
  return buf;
}

inline constexpr const char* kMetricsHeader =
    "site,model,tile_size,nms_iou,ap50_all,ap50_canopy,ap75_all,ap75_canopy,f1_all,f1_canopy\n";

/// One metrics row in the layout of the best-parameters table. F1 is the
/// max-F1 at IoU 0.5.
inline std::string metrics_row(const ReportMeta& meta, std::optional<double> tile_size,
                               std::optional<double> nms_iou, const EvalResult& r) {
  auto ap = [&](const char* s, double iou) { return text::fixed6(ap_at(r, s, iou)); };
  auto f1 = [&](const char* s) {
    const auto* t = r.find(s, 0.5);
    if (!t || !t->curve.defined()) return std::string("undefined");
    return text::fixed6(t->max_f1);
  };
  auto param = [](const std::optional<double>& v) { return v ? text::fixed6(*v) : std::string(); };
  return meta.site + ',' + meta.model + ',' + param(tile_size) + ',' + param(nms_iou) + ',' +
         ap("all", 0.5) + ',' + ap("canopy", 0.5) + ',' + ap("all", 0.75) + ',' +
         ap("canopy", 0.75) + ',' + f1("all") + ',' + f1("canopy") + '\n';
}

inline std::string pr_csv(const StratumResult& s, const ThresholdResult* t) {
  std::string out = "confidence,tp,fp,precision,recall\n";
  if (!s.defined || !t || !t->curve.defined()) return out + "# undefined\n";
  for (const auto& p : t->curve.points) {
    out += text::fixed6(p.confidence) + ',' + std::to_string(p.tp) + ',' + std::to_string(p.fp) +
           ',' + text::fixed6(p.precision) + ',' + text::fixed6(p.recall) + '\n';
  }
  return out;
}

inline constexpr const char* kGridsearchHeader =
    "tile_size,nms_iou,stratum,iou_threshold,ap,max_f1,f1_confidence\n";

/// Rows for every cell and every defined stratum; absent cells get one row
/// marked "absent".
inline std::string gridsearch_csv(std::span<const GridCell> cells) {
  std::string out = kGridsearchHeader;
  for (const auto& c : cells) {
    const std::string key = text::fixed6(c.tile_size) + ',' + text::fixed6(c.nms_iou) + ',';
    if (!c.present()) {
      out += key + "absent,,absent,absent,absent\n";
      continue;
    }
    for (const auto& s : c.result->strata) {
      if (!s.defined) continue;
      for (const auto& t : s.thresholds) {
        out += key + s.name + ',' + text::fixed6(t.iou_threshold) + ',' + text::fixed6(t.ap) + ',' +
               (t.curve.defined() ? text::fixed6(t.max_f1) : std::string("undefined")) + ',' +
               (t.f1_confidence ? text::fixed6(*t.f1_confidence) : std::string("none")) + '\n';
      }
    }
  }
  return out;
}

struct GridsearchRow {
  double tile_size = 0;
  double nms_iou = 0;
  std::string stratum;
  std::optional<double> iou_threshold;
  std::optional<double> ap;
  std::optional<double> max_f1;
  std::optional<double> f1_confidence;
};

inline std::vector<GridsearchRow> parse_gridsearch_csv(const std::string& content) {
  const auto rows = text::lines(content);
  if (rows.empty() || std::string(rows.front()) + "\n" != kGridsearchHeader) {
    throw ParseError("gridsearch.csv", 1, "unexpected header");
  }
  auto num = [](std::string_view v) { return text::parse_double(v); };
  std::vector<GridsearchRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (text::trim(rows[i]).empty()) continue;
    const auto f = text::split(rows[i], ',');
    if (f.size() != 7) throw ParseError("gridsearch.csv", i + 1, "expected 7 columns");
    const auto tile = num(f[0]), nms = num(f[1]);
    if (!tile || !nms) throw ParseError("gridsearch.csv", i + 1, "bad cell key");
    out.push_back({*tile, *nms, std::string(f[2]), num(f[3]), num(f[4]), num(f[5]), num(f[6])});
  }
  return out;
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }
}

inline void write_pr_files(const EvalResult& r, const std::filesystem::path& dir) {
  for (const auto& s : r.strata) {
    std::vector<double> thresholds;
    if (s.defined) {
      for (const auto& t : s.thresholds) thresholds.push_back(t.iou_threshold);
    } else {
      // Undefined stratum: still emit the files of the "all" thresholds.
      if (const auto* all = r.stratum("all")) {
        for (const auto& t : all->thresholds) thresholds.push_back(t.iou_threshold);
      }
    }
    for (double iou : thresholds) {
      text::write_file(dir / ("pr_" + s.name + "_" + iou_tag(iou) + ".csv"),
                       pr_csv(s, r.find(s.name, iou)));
    }
  }
}

}  // namespace detail

inline void emit_eval_reports(const EvalResult& r, const std::filesystem::path& dir,
                              const ReportMeta& meta, std::optional<double> tile_size = std::nullopt,
                              std::optional<double> nms_iou = std::nullopt) {
  detail::ensure_dir(dir);
  text::write_file(dir / "metrics.csv", kMetricsHeader + metrics_row(meta, tile_size, nms_iou, r));
  detail::write_pr_files(r, dir);
  text::write_file(dir / "pr_curves.svg", svg::pr_curves(r, meta.site + " / " + meta.model));
  text::write_file(dir / "eval.json", to_json(r).dump(1) + "\n");
}

inline nlohmann::json cells_to_json(std::span<const GridCell> cells) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells) {
    arr.push_back({{"tile_size", c.tile_size},
                   {"nms_iou", c.nms_iou},
                   {"n_detections", c.n_detections},
                   {"result", c.result ? to_json(*c.result) : nlohmann::json(nullptr)}});
  }
  return arr;
}

inline std::vector<GridCell> cells_from_json(const nlohmann::json& j) {
  std::vector<GridCell> cells;
  for (const auto& cj : j) {
    GridCell c{cj.at("tile_size").get<double>(), cj.at("nms_iou").get<double>(), std::nullopt,
               cj.at("n_detections").get<std::size_t>()};
    if (!cj.at("result").is_null()) c.result = eval_from_json(cj.at("result"));
    cells.push_back(std::move(c));
  }
  return cells;
}

/// Writes gridsearch.csv, the heatmap, and the full report set of the best cell.
inline void emit_gridsearch_reports(std::span<const GridCell> cells, const GridCell& best,
                                    double min_tile_size, const std::filesystem::path& dir,
                                    const ReportMeta& meta) {
  detail::ensure_dir(dir);
  text::write_file(dir / "gridsearch.csv", gridsearch_csv(cells));
  std::vector<std::pair<std::string, std::vector<svg::HeatCell>>> panels;
  for (const char* stratum : {"all", "canopy"}) {
    std::vector<svg::HeatCell> heat;
    bool any_defined = false;
    for (const auto& c : cells) {
      svg::HeatCell h{c.tile_size, c.nms_iou, c.present(), std::nullopt, std::nullopt};
      if (c.present()) {
        const auto* s = c.result->stratum(stratum);
        any_defined = any_defined || (s && s->defined);
        h.ap50 = ap_at(*c.result, stratum, 0.5);
        h.ap75 = ap_at(*c.result, stratum, 0.75);
      }
      heat.push_back(h);
    }
    if (any_defined) panels.emplace_back(stratum, std::move(heat));
  }
  text::write_file(dir / "gridsearch_heatmap.svg",
                   svg::gridsearch_heatmap(panels, best.tile_size, best.nms_iou,
                                           meta.site + " / " + meta.model));
  nlohmann::json doc = {{"site", meta.site},
                        {"model", meta.model},
                        {"min_tile_size", min_tile_size},
                        {"best", {{"tile_size", best.tile_size}, {"nms_iou", best.nms_iou}}},
                        {"cells", cells_to_json(cells)}};
  text::write_file(dir / "gridsearch.json", doc.dump(1) + "\n");
  emit_eval_reports(*best.result, dir, meta, best.tile_size, best.nms_iou);
}

}  // namespace crownval
