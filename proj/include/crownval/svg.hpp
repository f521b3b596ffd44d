#pragma once

// Static SVG renderings of precision-recall curves and gridsearch heatmaps.
// Output is plain text with fixed-precision coordinates, so identical
// results render to identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crownval/metrics.hpp"

namespace crownval::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v == 0.0 ? 0.0 : v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string threshold_colour(double iou) {
  if (std::abs(iou - 0.5) < 1e-9) return "#d62728";
  if (std::abs(iou - 0.75) < 1e-9) return "#1f77b4";
  return "#7f7f7f";
}

/// Precision (y) against recall (x); 0.5 in red, 0.75 in blue, canopy dashed.
inline std::string pr_curves(const EvalResult& r, const std::string& title) {
  const double W = 480, H = 420, L = 60, T = 40, PW = 360, PH = 320;
  auto px = [&](double recall) { return L + recall * PW; };
  auto py = [&](double precision) { return T + (1.0 - precision) * PH; };
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" +
                    num(H) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(L) + "\" y=\"20\" font-size=\"13\">" + escape(title) + "</text>\n";
  out += "<rect x=\"" + num(L) + "\" y=\"" + num(T) + "\" width=\"" + num(PW) + "\" height=\"" +
         num(PH) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    out += "<text x=\"" + num(px(v)) + "\" y=\"" + num(T + PH + 15) + "\" text-anchor=\"middle\">" +
           num(v) + "</text>\n";
    out += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(v) + 4) + "\" text-anchor=\"end\">" +
           num(v) + "</text>\n";
  }
  out += "<text x=\"" + num(L + PW / 2) + "\" y=\"" + num(T + PH + 32) +
         "\" text-anchor=\"middle\">Recall</text>\n";
  out += "<text x=\"15\" y=\"" + num(T + PH / 2) + "\" transform=\"rotate(-90 15 " +
         num(T + PH / 2) + ")\" text-anchor=\"middle\">Precision</text>\n";

  int legend = 0;
  for (const auto& s : r.strata) {
    if (!s.defined) continue;
    for (const auto& t : s.thresholds) {
      const std::string colour = threshold_colour(t.iou_threshold);
      const std::string dash = s.name == "all" ? "" : " stroke-dasharray=\"6 3\"";
      if (t.curve.defined() && !t.curve.points.empty()) {
        std::string pts = num(px(0)) + "," + num(py(t.curve.points.front().precision));
        for (const auto& p : t.curve.points) pts += " " + num(px(p.recall)) + "," + num(py(p.precision));
        out += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.5\"" + dash +
               " points=\"" + pts + "\"/>\n";
      }
      const double ly = T + 14 + 14 * legend++;
      out += "<line x1=\"" + num(L + PW - 130) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
             num(L + PW - 110) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + colour + "\"" + dash +
             "/>\n";
      out += "<text x=\"" + num(L + PW - 105) + "\" y=\"" + num(ly) + "\">" + s.name + " IoU " +
             num(t.iou_threshold) + " AP " + (t.ap ? num(*t.ap) : std::string("n/a")) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

struct HeatCell {
  double tile_size = 0;
  double nms_iou = 0;
  bool present = false;
  std::optional<double> ap50;
  std::optional<double> ap75;
};

/// One panel per stratum: rows are tile sizes, columns NMS IoUs. Cells are
/// coloured by AP50 and show AP50 above AP75; the best cell is outlined.
inline std::string gridsearch_heatmap(const std::vector<std::pair<std::string, std::vector<HeatCell>>>& panels,
                                      double best_tile, double best_nms, const std::string& title) {
  std::vector<double> tiles, ious;
  for (const auto& [name, cells] : panels) {
    for (const auto& c : cells) {
      if (std::find(tiles.begin(), tiles.end(), c.tile_size) == tiles.end()) tiles.push_back(c.tile_size);
      if (std::find(ious.begin(), ious.end(), c.nms_iou) == ious.end()) ious.push_back(c.nms_iou);
    }
  }
  std::sort(tiles.begin(), tiles.end());
  std::sort(ious.begin(), ious.end());
  const double cw = 64, ch = 40, L = 70, T = 50, gap = 40;
  const double panel_w = cw * static_cast<double>(ious.size());
  const double W = L + (panel_w + gap) * static_cast<double>(panels.size()) + 10;
  const double H = T + ch * static_cast<double>(tiles.size()) + 50;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" +
                    num(H) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
  out += "<text x=\"10\" y=\"18\" font-size=\"13\">" + escape(title) + "</text>\n";

  auto colour = [](double ap) {
    // White to dark green.
    const double t = std::clamp(ap, 0.0, 1.0);
    const int r = static_cast<int>(247 - t * (247 - 0));
    const int g = static_cast<int>(252 - t * (252 - 109));
    const int b = static_cast<int>(245 - t * (245 - 44));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& [name, cells] = panels[p];
    const double x0 = L + static_cast<double>(p) * (panel_w + gap);
    out += "<text x=\"" + num(x0) + "\" y=\"" + num(T - 22) + "\" font-size=\"12\">" + escape(name) +
           "</text>\n";
    for (std::size_t j = 0; j < ious.size(); ++j) {
      out += "<text x=\"" + num(x0 + cw * (static_cast<double>(j) + 0.5)) + "\" y=\"" + num(T - 6) +
             "\" text-anchor=\"middle\">" + num(ious[j]) + "</text>\n";
    }
    for (std::size_t i = 0; i < tiles.size(); ++i) {
      const double y = T + ch * static_cast<double>(i);
      if (p == 0) {
        out += "<text x=\"" + num(L - 6) + "\" y=\"" + num(y + ch / 2 + 4) +
               "\" text-anchor=\"end\">" + num(tiles[i]) + " m</text>\n";
      }
      for (std::size_t j = 0; j < ious.size(); ++j) {
        const double x = x0 + cw * static_cast<double>(j);
        const auto it = std::find_if(cells.begin(), cells.end(), [&](const HeatCell& c) {
          return c.tile_size == tiles[i] && c.nms_iou == ious[j];
        });
        const bool present = it != cells.end() && it->present;
        const std::string fill = present && it->ap50 ? colour(*it->ap50) : "#dddddd";
        out += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cw) + "\" height=\"" +
               num(ch) + "\" fill=\"" + fill + "\" stroke=\"#999999\"/>\n";
        const double cx = x + cw / 2;
        if (!present) {
          out += "<text x=\"" + num(cx) + "\" y=\"" + num(y + ch / 2 + 4) +
                 "\" text-anchor=\"middle\">absent</text>\n";
          continue;
        }
        auto label = [](const std::optional<double>& v) {
          if (!v) return std::string("n/a");
          char buf[16];
          std::snprintf(buf, sizeof buf, "%.3f", *v);
          return std::string(buf);
        };
        out += "<text x=\"" + num(cx) + "\" y=\"" + num(y + 16) + "\" text-anchor=\"middle\">" +
               label(it->ap50) + "</text>\n";
        out += "<text x=\"" + num(cx) + "\" y=\"" + num(y + 31) + "\" text-anchor=\"middle\">" +
               label(it->ap75) + "</text>\n";
        if (tiles[i] == best_tile && ious[j] == best_nms) {
          out += "<rect x=\"" + num(x + 1) + "\" y=\"" + num(y + 1) + "\" width=\"" + num(cw - 2) +
                 "\" height=\"" + num(ch - 2) + "\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"3\"/>\n";
        }
      }
    }
    out += "<text x=\"" + num(x0 + panel_w / 2) + "\" y=\"" + num(H - 12) +
           "\" text-anchor=\"middle\">NMS IoU</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace crownval::svg
