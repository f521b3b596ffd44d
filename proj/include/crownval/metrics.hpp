#pragma once

// Detection scoring against crown labels.
//
// Detections are matched greedily in confidence order, each to the unmatched
// label of highest IoU at or above the threshold. AP is the area under the
// monotone precision envelope using all-point interpolation. The canopy
// stratum keeps labels whose height is at least `canopy_fraction` of the
// tallest label, and detections that were assigned such a height.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crownval/error.hpp"
#include "crownval/geom.hpp"
#include "crownval/labelgen.hpp"
#include "crownval/predictions.hpp"

namespace crownval {

struct EvalConfig {
  std::vector<double> iou_thresholds{0.5, 0.75};
  double canopy_fraction = 0.75;
  double coverage_fraction = 0.5;

  void validate() const {
    if (iou_thresholds.empty()) throw Error("at least one IoU threshold is required");
    for (double t : iou_thresholds) {
      if (!(t > 0 && t < 1)) throw Error("IoU thresholds must be in (0, 1)");
    }
    if (!(canopy_fraction > 0 && canopy_fraction < 1)) throw Error("canopy fraction must be in (0, 1)");
    if (!(coverage_fraction > 0 && coverage_fraction < 1)) {
      throw Error("coverage fraction must be in (0, 1)");
    }
  }
};

struct MatchPair {
  std::size_t detection;
  std::size_t label;
  double iou;
};

struct MatchSet {
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> unmatched_labels;
  // Per detection, in processing (confidence) order.
  std::vector<double> confidences;
  std::vector<char> true_positive;
};

/// Greedy matching. `dets` must already be in sort_detections order. Equal
/// IoUs resolve to the smaller tree id, then the earlier label.
inline MatchSet match(std::span<const Detection> dets, std::span<const CrownLabel> labels,
                      double iou_threshold) {
  if (!std::is_sorted(dets.begin(), dets.end(), detection_before)) {
    throw Error("match: detections must be sorted by descending confidence");
  }
  MatchSet ms;
  std::vector<char> taken(labels.size(), 0);
  ms.confidences.reserve(dets.size());
  ms.true_positive.reserve(dets.size());
  for (std::size_t d = 0; d < dets.size(); ++d) {
    std::optional<std::size_t> best;
    double best_iou = 0;
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (taken[l]) continue;
      const double iou = bbox_iou(dets[d].bbox, labels[l].bbox);
      if (iou < iou_threshold) continue;
      if (!best || iou > best_iou ||
          (iou == best_iou && labels[l].tree_id < labels[*best].tree_id)) {
        best = l;
        best_iou = iou;
      }
    }
    ms.confidences.push_back(dets[d].confidence);
    if (best) {
      taken[*best] = 1;
      ms.pairs.push_back({d, *best, best_iou});
      ms.true_positive.push_back(1);
    } else {
      ms.unmatched_detections.push_back(d);
      ms.true_positive.push_back(0);
    }
  }
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (!taken[l]) ms.unmatched_labels.push_back(l);
  }
  return ms;
}

struct PRPoint {
  double confidence;
  std::size_t tp;
  std::size_t fp;
  double precision;
  double recall;

  bool operator==(const PRPoint&) const = default;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per detection, descending confidence
  std::size_t n_ground_truth = 0;

  /// Recall and AP are undefined without ground truth.
  bool defined() const { return n_ground_truth > 0; }
  bool operator==(const PRCurve&) const = default;
};

inline PRCurve pr_curve(const MatchSet& ms, std::size_t n_ground_truth) {
  PRCurve curve;
  curve.n_ground_truth = n_ground_truth;
  if (n_ground_truth == 0) return curve;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < ms.confidences.size(); ++i) {
    if (ms.true_positive[i]) ++tp; else ++fp;
    curve.points.push_back({ms.confidences[i], tp, fp,
                            static_cast<double>(tp) / static_cast<double>(tp + fp),
                            static_cast<double>(tp) / static_cast<double>(n_ground_truth)});
  }
  return curve;
}

/// All-point interpolated AP: sum over recall steps of the maximum precision
/// achieved at that recall or beyond. Each true positive is a recall step of
/// 1/G, so the envelope values are summed and divided once.
inline double average_precision(const PRCurve& curve) {
  if (!curve.defined()) throw Error("average precision is undefined without ground truth");
  const auto& pts = curve.points;
  double sum = 0.0;
  double envelope = 0.0;
  // Walk backwards so the envelope is a running maximum.
  for (std::size_t i = pts.size(); i-- > 0;) {
    envelope = std::max(envelope, pts[i].precision);
    const std::size_t prev_tp = i == 0 ? 0 : pts[i - 1].tp;
    if (pts[i].tp > prev_tp) sum += envelope;
  }
  return sum / static_cast<double>(curve.n_ground_truth);
}

struct F1Result {
  double f1 = 0;
  std::optional<double> confidence;  // cut achieving f1 (keep conf >= cut)
};

/// Best F1 over all distinct confidence cuts; ties go to the higher cut.
inline F1Result max_f1(const PRCurve& curve) {
  F1Result best;
  if (!curve.defined()) return best;
  const auto& pts = curve.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    // A cut keeps every detection at or above its confidence, so only the
    // last point of each equal-confidence run is a valid cut.
    if (i + 1 < pts.size() && pts[i + 1].confidence == pts[i].confidence) continue;
    // 2PR / (P + R) written over counts, so it is a single rounding.
    const double f1 = static_cast<double>(2 * pts[i].tp) /
                      static_cast<double>(pts[i].tp + pts[i].fp + curve.n_ground_truth);
    if (!best.confidence || f1 > best.f1) best = {f1, pts[i].confidence};
  }
  if (best.f1 == 0) best.confidence.reset();
  return best;
}

/// Fraction of the detection box covered by the label footprint.
inline double label_coverage(const Detection& det, const CrownLabel& label) {
  return clipped_area(label.footprint, det.bbox) / det.bbox.area();
}

/// Gives each detection the height of the label covering more than
/// `coverage_fraction` of its box; detections below that get no height.
inline std::vector<Detection> assign_heights(std::span<const Detection> dets,
                                             std::span<const CrownLabel> labels,
                                             double coverage_fraction = 0.5) {
  std::vector<Detection> out(dets.begin(), dets.end());
  for (auto& d : out) {
    d.assigned_height.reset();
    const CrownLabel* best = nullptr;
    double best_cov = 0;
    for (const auto& l : labels) {
      if (!l.max_height || intersection_area(d.bbox, l.bbox) <= 0) continue;
      const double cov = label_coverage(d, l);
      if (!best || cov > best_cov || (cov == best_cov && l.tree_id < best->tree_id)) {
        best = &l;
        best_cov = cov;
      }
    }
    if (best && best_cov > coverage_fraction) d.assigned_height = best->max_height;
  }
  return out;
}

inline bool all_have_heights(std::span<const CrownLabel> labels) {
  return std::all_of(labels.begin(), labels.end(), [](const auto& l) { return l.max_height.has_value(); });
}

/// fraction * tallest label height.
inline double canopy_threshold(std::span<const CrownLabel> labels, double fraction) {
  if (labels.empty()) throw Error("canopy threshold of an empty label set");
  if (!all_have_heights(labels)) throw Error("canopy threshold needs heights on every label");
  double top = *labels.front().max_height;
  for (const auto& l : labels) top = std::max(top, *l.max_height);
  return fraction * top;
}

inline std::vector<CrownLabel> canopy_filter(std::span<const CrownLabel> labels, double fraction) {
  const double thr = canopy_threshold(labels, fraction);
  std::vector<CrownLabel> out;
  for (const auto& l : labels) {
    if (*l.max_height >= thr) out.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ThresholdResult {
  double iou_threshold = 0;
  std::size_t n_ground_truth = 0;
  std::size_t n_detections = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::optional<double> ap;  // undefined when n_ground_truth == 0
  double max_f1 = 0;
  std::optional<double> f1_confidence;
  PRCurve curve;
};

struct StratumResult {
  std::string name;
  bool defined = true;  // false when the stratum cannot be formed (no heights)
  std::vector<ThresholdResult> thresholds;
};

struct EvalResult {
  std::string interpolation = "all-point";
  std::optional<double> canopy_height_threshold;
  std::vector<StratumResult> strata;

  const StratumResult* stratum(std::string_view name) const {
    for (const auto& s : strata) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }

  const ThresholdResult* find(std::string_view name, double iou_threshold) const {
    const auto* s = stratum(name);
    if (!s) return nullptr;
    for (const auto& t : s->thresholds) {
      if (std::abs(t.iou_threshold - iou_threshold) < 1e-12) return &t;
    }
    return nullptr;
  }
};

inline ThresholdResult score(std::span<const Detection> sorted, std::span<const CrownLabel> labels,
                             double iou_threshold) {
  const MatchSet ms = match(sorted, labels, iou_threshold);
  ThresholdResult r;
  r.iou_threshold = iou_threshold;
  r.n_ground_truth = labels.size();
  r.n_detections = sorted.size();
  r.tp = ms.pairs.size();
  r.fp = ms.unmatched_detections.size();
  r.fn = ms.unmatched_labels.size();
  r.curve = pr_curve(ms, labels.size());
  if (r.curve.defined()) r.ap = average_precision(r.curve);
  const auto f1 = max_f1(r.curve);
  r.max_f1 = f1.f1;
  r.f1_confidence = f1.confidence;
  return r;
}

/// Scores detections in the "all" and "canopy" strata at every configured
/// IoU threshold. Detections without an assigned height are left out of the
/// canopy stratum only.
inline EvalResult evaluate(std::span<const Detection> dets, std::span<const CrownLabel> labels,
                           const EvalConfig& cfg) {
  cfg.validate();
  EvalResult result;
  const auto sorted = sort_detections(dets);

  StratumResult all{"all", true, {}};
  for (double t : cfg.iou_thresholds) all.thresholds.push_back(score(sorted, labels, t));
  result.strata.push_back(std::move(all));

  StratumResult canopy{"canopy", false, {}};
  if (!labels.empty() && all_have_heights(labels)) {
    canopy.defined = true;
    const double thr = canopy_threshold(labels, cfg.canopy_fraction);
    result.canopy_height_threshold = thr;
    const auto canopy_labels = canopy_filter(labels, cfg.canopy_fraction);
    std::vector<Detection> canopy_dets;
    for (auto& d : assign_heights(sorted, labels, cfg.coverage_fraction)) {
      if (d.assigned_height && *d.assigned_height >= thr) canopy_dets.push_back(std::move(d));
    }
    for (double t : cfg.iou_thresholds) {
      canopy.thresholds.push_back(score(canopy_dets, canopy_labels, t));
    }
  }
  result.strata.push_back(std::move(canopy));
  return result;
}

// ---------------------------------------------------------------------------
// JSON form: per stratum and threshold {ap, max_f1, f1_confidence, pr}.

inline nlohmann::json to_json(const EvalResult& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json strata = json::array();
  for (const auto& s : r.strata) {
    json ths = json::array();
    for (const auto& t : s.thresholds) {
      json pr = json::array();
      for (const auto& p : t.curve.points) {
        pr.push_back(json::array({p.confidence, p.tp, p.fp, p.precision, p.recall}));
      }
      ths.push_back(json{{"iou_threshold", t.iou_threshold},
                         {"n_ground_truth", t.n_ground_truth},
                         {"n_detections", t.n_detections},
                         {"tp", t.tp},
                         {"fp", t.fp},
                         {"fn", t.fn},
                         {"ap", opt(t.ap)},
                         {"max_f1", t.max_f1},
                         {"f1_confidence", opt(t.f1_confidence)},
                         {"pr", std::move(pr)}});
    }
    strata.push_back(json{{"name", s.name}, {"defined", s.defined}, {"thresholds", std::move(ths)}});
  }
  return json{{"interpolation", r.interpolation},
              {"canopy_height_threshold", opt(r.canopy_height_threshold)},
              {"strata", std::move(strata)}};
}

inline EvalResult eval_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  EvalResult r;
  r.interpolation = j.at("interpolation").get<std::string>();
  r.canopy_height_threshold = opt(j.at("canopy_height_threshold"));
  for (const auto& sj : j.at("strata")) {
    StratumResult s{sj.at("name").get<std::string>(), sj.at("defined").get<bool>(), {}};
    for (const auto& tj : sj.at("thresholds")) {
      ThresholdResult t;
      t.iou_threshold = tj.at("iou_threshold").get<double>();
      t.n_ground_truth = tj.at("n_ground_truth").get<std::size_t>();
      t.n_detections = tj.at("n_detections").get<std::size_t>();
      t.tp = tj.at("tp").get<std::size_t>();
      t.fp = tj.at("fp").get<std::size_t>();
      t.fn = tj.at("fn").get<std::size_t>();
      t.ap = opt(tj.at("ap"));
      t.max_f1 = tj.at("max_f1").get<double>();
      t.f1_confidence = opt(tj.at("f1_confidence"));
      t.curve.n_ground_truth = t.n_ground_truth;
      for (const auto& p : tj.at("pr")) {
        t.curve.points.push_back({p[0].get<double>(), p[1].get<std::size_t>(),
                                  p[2].get<std::size_t>(), p[3].get<double>(), p[4].get<double>()});
      }
      s.thresholds.push_back(std::move(t));
    }
    r.strata.push_back(std::move(s));
  }
  return r;
}

}  // namespace crownval
