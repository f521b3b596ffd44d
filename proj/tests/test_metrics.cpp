#include <gtest/gtest.h>

#include "support.hpp"

using namespace crownval;
using testing_support::as_detections;
using testing_support::det;
using testing_support::Gen;
using testing_support::label;
namespace ref = testing_support::ref;

namespace {

ThresholdResult score_raw(const std::vector<Detection>& d, const std::vector<CrownLabel>& l, double t) {
  return score(sort_detections(d), l, t);
}

}  // namespace

TEST(Match, ThresholdDecides) {
  // IoU 0.6 between the two boxes.
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 10, 1))};
  const std::vector<Detection> d{det(0, 0, 6, 1, 0.9)};
  EXPECT_NEAR(bbox_iou(d[0].bbox, l[0].bbox), 0.6, 1e-12);
  EXPECT_EQ(match(d, l, 0.5).pairs.size(), 1u);
  EXPECT_EQ(match(d, l, 0.75).pairs.size(), 0u);
}

TEST(Match, RequiresSortedInput) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1))};
  const std::vector<Detection> d{det(0, 0, 1, 1, 0.2), det(0, 0, 1, 1, 0.9)};
  EXPECT_THROW(match(d, l, 0.5), Error);
}

TEST(Match, EqualIouGoesToSmallerTreeId) {
  const std::vector<CrownLabel> l{label(9, BBox(0, 0, 2, 1)), label(4, BBox(1, 0, 3, 1))};
  const std::vector<Detection> d{det(0.5, 0, 2.5, 1, 0.9)};
  const auto ms = match(d, l, 0.5);
  ASSERT_EQ(ms.pairs.size(), 1u);
  EXPECT_EQ(l[ms.pairs[0].label].tree_id, 4);
}

TEST(Match, CountsMatchExhaustiveGreedy) {
  Gen g(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CrownLabel> labels;
    for (int i = 0; i < 10; ++i) labels.push_back(label(i + 1, g.box(0, 10, 0.5, 3)));
    std::vector<Detection> dets;
    for (int i = 0; i < 20; ++i) {
      const auto& src = labels[static_cast<std::size_t>(g.integer(0, 9))].bbox;
      const double j = g.real(0, 0.6);
      auto b = BBox::try_make(src.minx() + g.real(-j, j), src.miny() + g.real(-j, j),
                              src.maxx() + g.real(-j, j), src.maxy() + g.real(-j, j));
      dets.push_back(make_detection(b ? *b : g.box(0, 10, 0.5, 3), g.unit()));
    }
    for (double t : {0.5, 0.75}) {
      const auto r = score_raw(dets, labels, t);
      const auto flags = ref::tp_flags(ref::ranked(dets), labels, t);
      const auto tp = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
      EXPECT_EQ(r.tp, tp);
      EXPECT_EQ(r.fp, dets.size() - tp);
      EXPECT_EQ(r.fn, labels.size() - tp);
    }
  }
}

TEST(PrCurve, AllTruePositives) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1)), label(2, BBox(3, 3, 4, 4))};
  const auto r = score_raw(as_detections(l), l, 0.5);
  for (const auto& p : r.curve.points) EXPECT_EQ(p.precision, 1.0);
  EXPECT_EQ(r.curve.points.back().recall, 1.0);
}

TEST(PrCurve, AllFalsePositives) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1))};
  const auto r = score_raw({det(5, 5, 6, 6, 0.9), det(7, 7, 8, 8, 0.4)}, l, 0.5);
  for (const auto& p : r.curve.points) EXPECT_EQ(p.precision, 0.0);
  EXPECT_EQ(*r.ap, 0.0);
}

TEST(PrCurve, MixedCaseTable) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1)), label(2, BBox(3, 3, 4, 4)),
                                  label(3, BBox(6, 6, 7, 7))};
  const std::vector<Detection> d{det(0, 0, 1, 1, 0.9), det(9, 9, 10, 10, 0.8), det(3, 3, 4, 4, 0.6),
                                 det(0, 0, 1, 1, 0.5)};
  const auto c = score_raw(d, l, 0.5).curve;
  const std::vector<PRPoint> want{{0.9, 1, 0, 1.0, 1.0 / 3},
                                  {0.8, 1, 1, 0.5, 1.0 / 3},
                                  {0.6, 2, 1, 2.0 / 3, 2.0 / 3},
                                  {0.5, 2, 2, 0.5, 2.0 / 3}};
  EXPECT_EQ(c.points, want);
}

TEST(AveragePrecision, SingleTruePositive) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1))};
  EXPECT_EQ(*score_raw({det(0, 0, 1, 1, 0.7)}, l, 0.5).ap, 1.0);
}

TEST(AveragePrecision, FiveSixths) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1)), label(2, BBox(3, 3, 4, 4))};
  const std::vector<Detection> d{det(0, 0, 1, 1, 0.9), det(9, 9, 10, 10, 0.8), det(3, 3, 4, 4, 0.7)};
  EXPECT_NEAR(*score_raw(d, l, 0.5).ap, 5.0 / 6.0, 1e-15);
}

TEST(AveragePrecision, RiemannEnvelopeOracle) {
  Gen g(12);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<CrownLabel> labels;
    const int nl = g.integer(1, 8);
    for (int i = 0; i < nl; ++i) labels.push_back(label(i + 1, g.grid_box(12, 4)));
    std::vector<Detection> dets;
    for (int i = g.integer(0, 15); i > 0; --i) {
      dets.push_back(make_detection(g.grid_box(12, 4), std::round(g.unit() * 10) / 10));
    }
    for (double t : {0.5, 0.75}) {
      // Riemann sum at recall granularity 1/n_gt of the envelope.
      const auto r = score_raw(dets, labels, t);
      double sum = 0;
      for (int k = 1; k <= nl; ++k) {
        const double rk = static_cast<double>(k) / nl;
        double best = 0;
        for (const auto& p : r.curve.points) {
          if (p.recall >= rk - 1e-12) best = std::max(best, p.precision);
        }
        sum += best / nl;
      }
      EXPECT_NEAR(*r.ap, sum, 1e-12);
    }
  }
}

TEST(AveragePrecision, UndefinedWithoutGroundTruth) {
  const auto r = score_raw({det(0, 0, 1, 1, 0.5)}, {}, 0.5);
  EXPECT_FALSE(r.ap);
  EXPECT_THROW(average_precision(r.curve), Error);
}

TEST(MaxF1, PerfectDetections) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1)), label(2, BBox(3, 3, 4, 4))};
  const std::vector<Detection> d{det(0, 0, 1, 1, 0.9), det(3, 3, 4, 4, 0.4)};
  const auto f = max_f1(score_raw(d, l, 0.5).curve);
  EXPECT_EQ(f.f1, 1.0);
  EXPECT_EQ(f.confidence, 0.4);
}

TEST(MaxF1, CutAboveFalsePositive) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1))};
  const auto f = max_f1(score_raw({det(0, 0, 1, 1, 0.9), det(5, 5, 6, 6, 0.3)}, l, 0.5).curve);
  EXPECT_EQ(f.f1, 1.0);
  EXPECT_EQ(f.confidence, 0.9);
}

TEST(MaxF1, TiedConfidencesFormOneCut) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1))};
  // The FP cannot be cut away from the TP at the same confidence.
  const auto f = max_f1(score_raw({det(0, 0, 1, 1, 0.5), det(5, 5, 6, 6, 0.5)}, l, 0.5).curve);
  EXPECT_NEAR(f.f1, 2.0 / 3.0, 1e-15);
}

TEST(MaxF1, ExhaustiveSweep) {
  Gen g(23);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<CrownLabel> labels;
    for (int i = g.integer(1, 8); i > 0; --i) labels.push_back(label(i, g.grid_box(10, 4)));
    std::vector<Detection> dets;
    for (int i = g.integer(0, 15); i > 0; --i) {
      dets.push_back(make_detection(g.grid_box(10, 4), std::round(g.unit() * 6) / 6));
    }
    for (double t : {0.5, 0.75}) {
      EXPECT_EQ(score_raw(dets, labels, t).max_f1, ref::max_f1(dets, labels, t));
    }
  }
}

TEST(AssignHeights, IdenticalBoxGetsHeight) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 2, 2), 14.0)};
  const auto d = assign_heights(std::vector<Detection>{det(0, 0, 2, 2, 0.5)}, l);
  EXPECT_EQ(d[0].assigned_height, 14.0);
}

TEST(AssignHeights, DisjointGetsNone) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 2, 2), 14.0)};
  EXPECT_FALSE(assign_heights(std::vector<Detection>{det(5, 5, 6, 6, 0.5)}, l)[0].assigned_height);
}

TEST(AssignHeights, StraddleBelowHalfGetsNone) {
  // Detection 0..10 x 0..1; label A covers 0..4 (0.4), label B covers 6..9.5 (0.35).
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 4, 1), 10.0), label(2, BBox(6, 0, 9.5, 1), 20.0)};
  const Detection d = det(0, 0, 10, 1, 0.5);
  EXPECT_DOUBLE_EQ(label_coverage(d, l[0]), 0.4);
  EXPECT_DOUBLE_EQ(label_coverage(d, l[1]), 0.35);
  EXPECT_FALSE(assign_heights(std::vector<Detection>{d}, l)[0].assigned_height);
}

TEST(AssignHeights, ExactlyHalfIsNotEnough) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1), 10.0)};
  EXPECT_FALSE(assign_heights(std::vector<Detection>{det(0, 0, 2, 1, 0.5)}, l)[0].assigned_height);
  EXPECT_TRUE(assign_heights(std::vector<Detection>{det(0, 0, 1.9, 1, 0.5)}, l)[0].assigned_height);
}

TEST(AssignHeights, UsesFootprintNotBox) {
  // L-shaped crown: its bbox fully covers the detection, its footprint does not.
  Polygon l_shape(Ring{{0, 0}, {4, 0}, {4, 1}, {1, 1}, {1, 4}, {0, 4}, {0, 0}});
  const std::vector<CrownLabel> l{label(1, l_shape, 10.0)};
  const auto d = assign_heights(std::vector<Detection>{det(2, 2, 4, 4, 0.5)}, l);
  EXPECT_FALSE(d[0].assigned_height);
}

TEST(Canopy, ThresholdAndFilter) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1), 10.0), label(2, BBox(2, 2, 3, 3), 20.0)};
  EXPECT_EQ(canopy_threshold(l, 0.75), 15.0);
  const auto c = canopy_filter(l, 0.75);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].tree_id, 2);
  const std::vector<CrownLabel> same{label(1, BBox(0, 0, 1, 1), 7.0), label(2, BBox(2, 2, 3, 3), 7.0)};
  EXPECT_EQ(canopy_filter(same, 0.75).size(), 2u);
}

TEST(Canopy, RandomHeightsMatchBruteForce) {
  Gen g(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CrownLabel> l;
    double top = 0;
    for (int i = g.integer(1, 30); i > 0; --i) {
      const double h = g.real(1, 40);
      top = std::max(top, h);
      l.push_back(label(i, BBox(i, 0, i + 1, 1), h));
    }
    std::vector<TreeId> want;
    for (const auto& x : l) {
      if (*x.max_height >= 0.75 * top) want.push_back(x.tree_id);
    }
    std::vector<TreeId> got;
    for (const auto& x : canopy_filter(l, 0.75)) got.push_back(x.tree_id);
    EXPECT_EQ(got, want);
  }
}

TEST(Evaluate, LabelsAsDetectionsArePerfect) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1), 5.0), label(2, BBox(3, 3, 5, 5), 20.0),
                                  label(3, BBox(6, 0, 8, 3), 18.0)};
  const auto r = evaluate(as_detections(l), l, EvalConfig{});
  for (const char* s : {"all", "canopy"}) {
    for (double t : {0.5, 0.75}) {
      const auto* x = r.find(s, t);
      ASSERT_TRUE(x);
      EXPECT_EQ(*x->ap, 1.0);
      EXPECT_EQ(x->max_f1, 1.0);
    }
  }
  EXPECT_EQ(r.find("canopy", 0.5)->n_ground_truth, 2u);
}

TEST(Evaluate, EmptyDetections) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1), 5.0)};
  const auto r = evaluate(std::vector<Detection>{}, l, EvalConfig{});
  EXPECT_EQ(*r.find("all", 0.5)->ap, 0.0);
  EXPECT_EQ(r.find("all", 0.5)->fn, 1u);
  EXPECT_EQ(r.find("all", 0.5)->max_f1, 0.0);
}

TEST(Evaluate, CanopyUndefinedWithoutHeights) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1))};
  const auto r = evaluate(as_detections(l), l, EvalConfig{});
  EXPECT_FALSE(r.stratum("canopy")->defined);
  EXPECT_TRUE(r.stratum("all")->defined);
  EXPECT_FALSE(r.canopy_height_threshold);
}

TEST(Evaluate, NoGroundTruthIsUndefined) {
  const auto r = evaluate(std::vector<Detection>{det(0, 0, 1, 1, 0.5)}, {}, EvalConfig{});
  EXPECT_FALSE(r.find("all", 0.5)->ap);
  EXPECT_FALSE(r.find("all", 0.5)->curve.defined());
}

TEST(Evaluate, HeightlessDetectionsLeaveCanopyOnly) {
  const std::vector<CrownLabel> l{label(1, BBox(0, 0, 1, 1), 20.0)};
  const std::vector<Detection> d{det(0, 0, 1, 1, 0.9), det(5, 5, 6, 6, 0.8)};
  const auto r = evaluate(d, l, EvalConfig{});
  EXPECT_EQ(r.find("all", 0.5)->fp, 1u);
  EXPECT_EQ(r.find("canopy", 0.5)->fp, 0u);
  EXPECT_EQ(r.find("canopy", 0.5)->n_detections, 1u);
}

TEST(Evaluate, JsonRoundTrip) {
  Gen g(6);
  std::vector<CrownLabel> l;
  for (int i = 0; i < 6; ++i) l.push_back(label(i + 1, g.box(0, 10, 0.5, 2), g.real(5, 20)));
  std::vector<Detection> d;
  for (int i = 0; i < 10; ++i) d.push_back(make_detection(g.box(0, 10, 0.5, 2), g.unit()));
  const auto r = evaluate(d, l, EvalConfig{});
  EXPECT_EQ(to_json(eval_from_json(to_json(r))), to_json(r));
}

TEST(EvalConfig, Validates) {
  EXPECT_THROW((EvalConfig{{}, 0.75, 0.5}.validate()), Error);
  EXPECT_THROW((EvalConfig{{1.0}, 0.75, 0.5}.validate()), Error);
  EXPECT_THROW((EvalConfig{{0.5}, 0.0, 0.5}.validate()), Error);
  EXPECT_THROW((EvalConfig{{0.5}, 0.75, 1.0}.validate()), Error);
}
