#include <gtest/gtest.h>

#include "support.hpp"

using namespace crownval;
using testing_support::Gen;
namespace ref = testing_support::ref;

namespace {

synth::SynthSceneConfig small_config(std::uint64_t seed) {
  synth::SynthSceneConfig c;
  c.seed = seed;
  c.n_trees = 5;
  c.plot_side = 4;
  c.points_per_tree = 1500;
  return c;
}

}  // namespace

TEST(GenerateScene, Deterministic) {
  const auto a = synth::generate_scene(small_config(11));
  const auto b = synth::generate_scene(small_config(11));
  const auto c = synth::generate_scene(small_config(12));
  ASSERT_EQ(a.plot.trees.size(), 5u);
  for (std::size_t i = 0; i < a.plot.trees.size(); ++i) EXPECT_EQ(a.plot.trees[i].points, b.plot.trees[i].points);
  EXPECT_NE(a.plot.trees[0].points, c.plot.trees[0].points);
}

TEST(GenerateScene, TreesStayInsideTheirCrowns) {
  const auto s = synth::generate_scene(small_config(3));
  for (std::size_t i = 0; i < s.truth.trees.size(); ++i) {
    const auto& t = s.truth.trees[i];
    EXPECT_EQ(s.plot.trees[i].id, t.id);
    EXPECT_LE(s.plot.trees[i].max_z(), t.height);
    for (const auto& p : s.plot.trees[i].points) {
      EXPECT_LE(std::hypot(p.x - t.cx, p.y - t.cy), t.radius + 1e-12);
      EXPECT_GE(p.z, 0.0);
    }
  }
}

TEST(GenerateScene, SingleTreeExtentIsItsBbox) {
  auto cfg = small_config(5);
  cfg.n_trees = 1;
  const auto s = synth::generate_scene(cfg);
  const auto labels = generate_labels(s.plot, LabelGenConfig{}).labels;
  ASSERT_EQ(labels.size(), 1u);
  const BBox e = plot_extent(s.plot);
  const std::vector<TreeCloud> one{s.plot.trees[0]};
  EXPECT_EQ(e, plot_extent(one));
  // The label bbox is the pixel-snapped cover of the same points.
  const BBox snapped = GridSpec::covering(e, 0.02).extent();
  EXPECT_TRUE(snapped.contains(labels[0].bbox));
}

TEST(GenerateScene, ZeroOverlapTreesOwnTheirWholeSupport) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = small_config(seed);
    cfg.overlap = 0;
    cfg.plot_side = 7;
    const auto s = synth::generate_scene(cfg);
    const auto r = generate_labels(s.plot, LabelGenConfig{});
    EXPECT_TRUE(r.omitted.empty());
    for (const auto& t : s.plot.trees) {
      PlotCloudSet alone = make_plot("one", {t});
      const auto solo = ref::lattice_map(synth::brute_force_index_map(alone, 0.02, 1));
      std::set<ref::Cell> support;
      for (const auto& [cell, id] : solo) support.insert(cell);
      EXPECT_EQ(ref::owned(r.mosaic.index, t.id), support) << "seed " << seed << " tree " << t.id;
    }
  }
}

TEST(GenerateScene, CrowdedPlotIsRejected) {
  auto cfg = small_config(1);
  cfg.n_trees = 200;
  cfg.overlap = 0;
  EXPECT_THROW(synth::generate_scene(cfg), Error);
  cfg.n_trees = 0;
  EXPECT_THROW(synth::generate_scene(cfg), Error);
}

TEST(BruteForceIndexMap, MatchesLabelGenerator) {
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    auto cfg = small_config(seed);
    cfg.shape = seed % 2 ? synth::CrownShape::cone : synth::CrownShape::paraboloid;
    cfg.overlap = 0.6;
    const auto s = synth::generate_scene(cfg);
    for (int window : {0, 1, 2}) {
      LabelGenConfig lc;
      lc.fill_window = window;
      const auto r = generate_labels(s.plot, lc);
      EXPECT_EQ(ref::lattice_map(r.mosaic.index),
                ref::lattice_map(synth::brute_force_index_map(s.plot, 0.02, window)))
          << "seed " << seed << " window " << window;
    }
  }
}

TEST(OcclusionScene, ShortTreeIsOmitted) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = synth::generate_occlusion_scene(seed, 0.02);
    const auto r = generate_labels(s.plot, LabelGenConfig{});
    ASSERT_EQ(r.labels.size(), 1u);
    EXPECT_EQ(r.labels[0].tree_id, 1);
    EXPECT_EQ(r.omitted, std::vector<TreeId>{2});
  }
}

TEST(PerturbToDetections, PerfectDetectorScoresOne) {
  const auto s = synth::generate_scene(small_config(8));
  const auto labels = generate_labels(s.plot, LabelGenConfig{}).labels;
  const auto p = synth::perturb_to_detections(labels, plot_extent(s.plot), 1, 1.0, 0, 0.0);
  EXPECT_EQ(p.detections.size(), labels.size());
  const auto r = evaluate(p.detections, labels, EvalConfig{});
  EXPECT_EQ(*ap_at(r, "all", 0.5), 1.0);
  EXPECT_EQ(r.find("all", 0.5)->max_f1, 1.0);
}

TEST(PerturbToDetections, NoTruePositivesMeansZeroRecall) {
  const auto s = synth::generate_scene(small_config(8));
  const auto labels = generate_labels(s.plot, LabelGenConfig{}).labels;
  const auto p = synth::perturb_to_detections(labels, plot_extent(s.plot), 2, 0.0, 6, 0.05);
  EXPECT_EQ(p.true_positives(), 0u);
  EXPECT_EQ(p.missed.size(), labels.size());
  const auto r = evaluate(p.detections, labels, EvalConfig{});
  EXPECT_EQ(r.find("all", 0.5)->tp, 0u);
  EXPECT_EQ(*ap_at(r, "all", 0.5), 0.0);
}

TEST(PerturbToDetections, BookkeepingMatchesMatcher) {
  // 50 well separated square labels.
  std::vector<CrownLabel> labels;
  for (int i = 0; i < 50; ++i) {
    const double x = (i % 10) * 3.0, y = (i / 10) * 3.0;
    labels.push_back(testing_support::label(i + 1, BBox(x, y, x + 1.5, y + 1.5), 10.0 + i % 7));
  }
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto p = synth::perturb_to_detections(labels, BBox(0, 0, 30, 15), seed, 0.6, 10, 0.2);
    const auto r = evaluate(p.detections, labels, EvalConfig{});
    const auto* t = r.find("all", 0.5);
    EXPECT_EQ(t->tp, p.true_positives());
    EXPECT_EQ(t->fn, p.missed.size());
    EXPECT_EQ(t->fp, p.detections.size() - p.true_positives());
  }
}

TEST(TruthJson, RecordsTreesAndDetections) {
  const auto cfg = small_config(4);
  const auto s = synth::generate_scene(cfg);
  const auto labels = generate_labels(s.plot, LabelGenConfig{}).labels;
  const auto p = synth::perturb_to_detections(labels, plot_extent(s.plot), 1, 0.8, 2, 0.05);
  const auto j = synth::truth_to_json(cfg, s.truth, &p);
  EXPECT_EQ(j.dump(), synth::truth_to_json(cfg, s.truth, &p).dump());
  EXPECT_NE(j.dump().find("\"trees\""), std::string::npos);
}
