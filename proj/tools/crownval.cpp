// crownval: crown labels from segmented TLS plots, and detection evaluation.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "crownval/crownval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crownval;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  unsigned threads = 1;
  bool frozen_time = false;
};

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

// Content digests of the input files; directories expand to their regular
// files in name order.
json digests(const std::vector<fs::path>& inputs) {
  json out = json::array();
  auto add = [&](const fs::path& f) {
    out.push_back({{"path", f.string()}, {"sha256", sha256_hex(text::read_file(f))}});
  };
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) add(f);
    } else if (fs::is_regular_file(in)) {
      add(in);
    }
  }
  return out;
}

std::string timestamp(bool frozen) {
  if (frozen) return "1970-01-01T00:00:00Z";
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const std::vector<fs::path>& inputs, const Common& common) {
  json m = {{"command", command},
            {"config", config},
            {"inputs", digests(inputs)},
            {"version", kVersion},
            {"timestamp", timestamp(common.frozen_time)}};
  text::write_file(dir / "manifest.json", m.dump(1) + "\n");
}

std::optional<BBox> parse_extent(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto f = text::split(s, ',');
  if (f.size() != 4) throw Error("plot extent must be minx,miny,maxx,maxy");
  double v[4];
  for (int i = 0; i < 4; ++i) {
    const auto d = text::parse_double(f[static_cast<std::size_t>(i)]);
    if (!d) throw Error("plot extent must be numeric");
    v[i] = *d;
  }
  return BBox(v[0], v[1], v[2], v[3]);
}

BBox labels_extent(const std::vector<CrownLabel>& labels) {
  if (labels.empty()) throw Error("no labels and no --plot-extent: plot extent unknown");
  BBox b = labels.front().bbox;
  for (const auto& l : labels) b = bbox_union(b, l.bbox);
  return b;
}

NmsScope parse_scope(const std::string& s) {
  if (s == "global") return NmsScope::global;
  if (s == "tile") return NmsScope::tile;
  throw Error("unknown NMS scope '" + s + "'");
}

struct EvalFlags {
  std::vector<double> ious{0.5, 0.75};
  double canopy_fraction = 0.75;
  double coverage_fraction = 0.5;
  std::string site = "plot";
  std::string model = "model";

  void add(CLI::App* cmd) {
    cmd->add_option("--iou", ious, "IoU thresholds")->delimiter(',')->capture_default_str();
    cmd->add_option("--canopy-fraction", canopy_fraction)->capture_default_str();
    cmd->add_option("--coverage-fraction", coverage_fraction)->capture_default_str();
    cmd->add_option("--site", site)->capture_default_str();
    cmd->add_option("--model", model)->capture_default_str();
  }
  EvalConfig config() const {
    EvalConfig c;
    c.iou_thresholds = ious;
    c.canopy_fraction = canopy_fraction;
    c.coverage_fraction = coverage_fraction;
    c.validate();
    return c;
  }
  json to_json() const {
    return {{"iou", ious},
            {"canopy_fraction", canopy_fraction},
            {"coverage_fraction", coverage_fraction},
            {"site", site},
            {"model", model}};
  }
};

// Converts tile sizes given in pixels to meters.
double tile_meters(double v, const std::string& unit, std::optional<double> gsd_cm) {
  if (unit == "m") return v;
  if (unit != "px") throw CLI::ValidationError("--tile-unit", "must be m or px");
  if (!gsd_cm) throw CLI::RequiredError("--gsd (needed for pixel tile sizes)");
  return tile_size_from_pixels(v, *gsd_cm / 100.0);
}

bool log_undefined(const EvalResult& r) {
  const auto* all = r.stratum("all");
  if (all && !all->thresholds.empty() && all->thresholds.front().ap) return false;
  std::cerr << "undefined metrics: no ground-truth labels\n";
  return true;
}

// --------------------------------------------------------------------------

struct LabelgenArgs {
  fs::path input, out;
  double resolution = 0.02;
  int fill_window = 1;
  std::string corrections;
  bool emit_rasters = false;
};

int cmd_labelgen(const LabelgenArgs& a, const Common& common) {
  LabelGenConfig cfg;
  cfg.resolution = a.resolution;
  cfg.fill_window = a.fill_window;
  cfg.validate();
  const auto plot = read_plot(a.input);
  std::optional<Corrections> corr;
  if (!a.corrections.empty()) corr = read_corrections(a.corrections);
  auto result = generate_labels(plot, cfg, common.threads);
  for (TreeId id : result.omitted) std::cerr << "omitted tree " << id << ": not visible from above\n";
  if (corr) result.labels = apply_corrections(result.labels, *corr);
  fs::create_directories(a.out);
  write_labels(a.out / "labels.geojson", result.labels);
  if (a.emit_rasters) {
    write_ascii_grid(a.out / "dsm.asc", result.mosaic.height);
    write_ascii_grid(a.out / "index.asc", result.mosaic.index);
  }
  std::vector<fs::path> inputs{a.input};
  if (!a.corrections.empty()) inputs.emplace_back(a.corrections);
  write_manifest(a.out, "labelgen",
                 {{"input", a.input.string()},
                  {"resolution", a.resolution},
                  {"fill_window", a.fill_window},
                  {"corrections", a.corrections},
                  {"emit_rasters", a.emit_rasters},
                  {"threads", common.threads}},
                 inputs, common);
  std::cout << result.labels.size() << " labels, " << result.omitted.size() << " omitted\n";
  return 0;
}

struct EvaluateArgs {
  fs::path labels, detections, out;
  std::string plot_extent;
  std::optional<double> nms_iou;
  std::optional<double> tile_size;
  std::string tile_unit = "m";
  std::optional<double> gsd;
  double overlap = 0.5;
  std::string scope = "global";
  EvalFlags eval;
};

int cmd_evaluate(const EvaluateArgs& a, const Common& common) {
  const auto cfg = a.eval.config();
  const auto labels = read_labels(a.labels);
  const auto raw = read_detections(a.detections);
  auto extent = parse_extent(a.plot_extent);
  if (!extent && !labels.empty()) extent = labels_extent(labels);

  std::vector<Detection> dets;
  std::optional<double> tile;
  if (a.nms_iou) {
    if (!extent) throw Error("no labels and no --plot-extent: plot extent unknown");
    tile = a.tile_size ? tile_meters(*a.tile_size, a.tile_unit, a.gsd)
                       : std::max(extent->width(), extent->height());
    const TilingConfig tc{*tile, a.overlap, *a.nms_iou, parse_scope(a.scope)};
    tc.validate();
    const auto tiles = make_tiles(*extent, tc.tile_size, tc.overlap);
    dets = merge_tiled(group_by_tile(raw, tiles), tc, *extent);
    if (!a.tile_size) tile.reset();
  } else {
    if (a.tile_size) throw Error("--tile-size needs --nms-iou");
    for (const auto& d : raw) {
      if (!extent) {
        dets.push_back(d);
      } else if (auto c = clip_detection(d, *extent)) {
        dets.push_back(std::move(*c));
      }
    }
  }
  const auto result = evaluate(dets, labels, cfg);
  emit_eval_reports(result, a.out, ReportMeta{a.eval.site, a.eval.model}, tile, a.nms_iou);
  json conf = a.eval.to_json();
  conf["labels"] = a.labels.string();
  conf["detections"] = a.detections.string();
  conf["plot_extent"] = a.plot_extent;
  conf["nms_iou"] = a.nms_iou ? json(*a.nms_iou) : json(nullptr);
  conf["tile_size"] = a.tile_size ? json(*a.tile_size) : json(nullptr);
  conf["tile_unit"] = a.tile_unit;
  conf["gsd_cm"] = a.gsd ? json(*a.gsd) : json(nullptr);
  conf["overlap"] = a.overlap;
  conf["nms_scope"] = a.scope;
  write_manifest(a.out, "evaluate", conf, {a.labels, a.detections}, common);
  return log_undefined(result) ? 1 : 0;
}

struct GridsearchArgs {
  fs::path labels, out;
  std::string detections, detections_dir;
  std::string plot_extent;
  std::vector<double> tile_sizes, nms_ious;
  std::string tile_unit = "m";
  std::optional<double> gsd;
  double overlap = 0.5;
  std::string scope = "global";
  std::string min_tile_size = "auto";
  EvalFlags eval;
};

// Raw detections for one tile size: <dir>/tile_<size>.csv or .geojson.
std::optional<std::vector<Detection>> tile_file(const fs::path& dir, double size) {
  for (const char* ext : {".csv", ".geojson"}) {
    const fs::path p = dir / ("tile_" + text::exact(size) + ext);
    if (fs::is_regular_file(p)) return read_detections(p);
  }
  return std::nullopt;
}

int cmd_gridsearch(const GridsearchArgs& a, const Common& common) {
  const auto cfg = a.eval.config();
  if (a.detections.empty() == a.detections_dir.empty()) {
    throw CLI::ValidationError("exactly one of --detections or --detections-dir is required");
  }
  const auto labels = read_labels(a.labels);
  auto extent = parse_extent(a.plot_extent);
  if (!extent) extent = labels_extent(labels);

  GridSearchSpec spec;
  for (double t : a.tile_sizes) spec.tile_sizes.push_back(tile_meters(t, a.tile_unit, a.gsd));
  spec.nms_ious = a.nms_ious;
  spec.overlap = a.overlap;
  spec.scope = parse_scope(a.scope);
  spec.validate();

  std::vector<fs::path> inputs{a.labels};
  CellDetections source;
  if (!a.detections.empty()) {
    inputs.emplace_back(a.detections);
    source = pooled_source(read_detections(a.detections), *extent, spec);
  } else {
    if (!fs::is_directory(a.detections_dir)) throw IoError("not a directory: " + a.detections_dir);
    inputs.emplace_back(a.detections_dir);
    std::map<double, std::vector<Detection>> raw;
    for (std::size_t i = 0; i < a.tile_sizes.size(); ++i) {
      if (auto d = tile_file(a.detections_dir, a.tile_sizes[i])) {
        raw[spec.tile_sizes[i]] = std::move(*d);
      } else {
        std::cerr << "no detections for tile size " << text::exact(a.tile_sizes[i])
                  << ": cells marked absent\n";
      }
    }
    source = tiled_source(std::move(raw), *extent, spec);
  }

  const auto cells = run_gridsearch(source, labels, spec, cfg, common.threads);
  double min_tile = 0;
  if (a.min_tile_size == "auto") {
    min_tile = default_min_tile_size(labels);
  } else {
    const auto v = text::parse_double(a.min_tile_size);
    if (!v || *v < 0) throw Error("--min-tile-size must be 'auto' or a non-negative number");
    min_tile = *v;
  }
  const auto& best = select_best(cells, min_tile);
  emit_gridsearch_reports(cells, best, min_tile, a.out, ReportMeta{a.eval.site, a.eval.model});

  json conf = a.eval.to_json();
  conf["labels"] = a.labels.string();
  conf["detections"] = a.detections;
  conf["detections_dir"] = a.detections_dir;
  conf["plot_extent"] = a.plot_extent;
  conf["tile_sizes"] = a.tile_sizes;
  conf["tile_unit"] = a.tile_unit;
  conf["gsd_cm"] = a.gsd ? json(*a.gsd) : json(nullptr);
  conf["nms_ious"] = a.nms_ious;
  conf["overlap"] = a.overlap;
  conf["nms_scope"] = a.scope;
  conf["min_tile_size"] = a.min_tile_size;
  conf["threads"] = common.threads;
  write_manifest(a.out, "gridsearch", conf, inputs, common);
  std::cout << "best: tile " << text::exact(best.tile_size) << " m, NMS IoU "
            << text::exact(best.nms_iou) << ", AP50 " << text::fixed6(ap_at(*best.result, "all", 0.5))
            << "\n";
  return 0;
}

struct StatsArgs {
  std::vector<fs::path> labels;
  std::vector<std::string> plot_ids;
  std::optional<double> gsd;
  std::string dims;
  fs::path out;
};

int cmd_stats(const StatsArgs& a, const Common& common) {
  if (!a.plot_ids.empty() && a.plot_ids.size() != a.labels.size()) {
    throw CLI::ValidationError("--plot-id must be given once per labels file");
  }
  std::optional<std::pair<std::int64_t, std::int64_t>> dims;
  if (!a.dims.empty()) {
    const auto f = text::split(a.dims, 'x');
    const auto w = f.size() == 2 ? text::parse_int(f[0]) : std::nullopt;
    const auto h = f.size() == 2 ? text::parse_int(f[1]) : std::nullopt;
    if (!w || !h || *w <= 0 || *h <= 0) throw Error("--dims must be WIDTHxHEIGHT");
    dims = std::pair{*w, *h};
  }
  std::vector<PlotSummary> rows;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const auto labels = read_labels(a.labels[i]);
    std::string id = a.plot_ids.empty() ? a.labels[i].stem().string() : a.plot_ids[i];
    auto s = summarize_labels(labels, std::move(id), a.gsd);
    s.orthomosaic_dims = dims;
    rows.push_back(std::move(s));
  }
  fs::create_directories(a.out);
  text::write_file(a.out / "summary.csv", summary_csv(rows));
  for (const auto& r : rows) std::cout << format_summary_row(r) << "\n";
  json conf = {{"labels", json::array()},
               {"plot_ids", a.plot_ids},
               {"gsd_cm", a.gsd ? json(*a.gsd) : json(nullptr)},
               {"dims", a.dims}};
  for (const auto& p : a.labels) conf["labels"].push_back(p.string());
  write_manifest(a.out, "stats", conf, a.labels, common);
  return 0;
}

struct SynthArgs {
  synth::SynthSceneConfig scene;
  std::string shape = "cone";
  std::vector<double> heights{5.0, 20.0};
  std::vector<double> radii{0.3, 0.8};
  double tp_rate = 0.8;
  int fp_count = 5;
  double jitter = 0.05;
  std::uint64_t det_seed = 0;  // 0: derive from the scene seed
  double resolution = 0.02;
  int fill_window = 1;
  fs::path out;
};

int cmd_synth(SynthArgs a, const Common& common) {
  if (a.heights.size() != 2 || a.radii.size() != 2) throw Error("ranges take two values: lo,hi");
  a.scene.shape = synth::parse_shape(a.shape);
  a.scene.height_min = a.heights[0];
  a.scene.height_max = a.heights[1];
  a.scene.radius_min = a.radii[0];
  a.scene.radius_max = a.radii[1];
  const auto scene = synth::generate_scene(a.scene);

  LabelGenConfig lcfg;
  lcfg.resolution = a.resolution;
  lcfg.fill_window = a.fill_window;
  const auto labelled = generate_labels(scene.plot, lcfg, common.threads);
  const BBox extent = plot_extent(scene.plot);
  const std::uint64_t det_seed = a.det_seed ? a.det_seed : synth::splitmix64(a.scene.seed) ^ 1;
  const auto dets = synth::perturb_to_detections(labelled.labels, extent, det_seed, a.tp_rate,
                                                 a.fp_count, a.jitter);

  fs::create_directories(a.out / "clouds");
  for (const auto& t : scene.plot.trees) {
    write_tree_xyz(a.out / "clouds" / (std::to_string(t.id) + ".xyz"), t);
  }
  write_labels(a.out / "labels.geojson", labelled.labels);
  write_detections_csv(a.out / "detections.csv", dets.detections);
  text::write_file(a.out / "truth.json",
                   synth::truth_to_json(a.scene, scene.truth, &dets).dump(1) + "\n");
  write_manifest(a.out, "synth",
                 {{"seed", a.scene.seed},
                  {"n_trees", a.scene.n_trees},
                  {"plot_side", a.scene.plot_side},
                  {"shape", a.shape},
                  {"height_range", a.heights},
                  {"radius_range", a.radii},
                  {"points_per_tree", a.scene.points_per_tree},
                  {"overlap_intensity", a.scene.overlap},
                  {"tp_rate", a.tp_rate},
                  {"fp_count", a.fp_count},
                  {"jitter", a.jitter},
                  {"detection_seed", det_seed},
                  {"resolution", a.resolution},
                  {"fill_window", a.fill_window}},
                 {}, common);
  std::cout << scene.plot.trees.size() << " trees, " << labelled.labels.size() << " labels, "
            << dets.detections.size() << " detections\n";
  return 0;
}

struct ReportArgs {
  fs::path run, out;
  std::string site, model;
  std::optional<double> tile_size, nms_iou;
};

// Re-renders the report files of an earlier evaluate or gridsearch run.
int cmd_report(const ReportArgs& a, const Common& common) {
  const fs::path out = a.out.empty() ? a.run : a.out;
  if (fs::is_regular_file(a.run / "gridsearch.json")) {
    const auto doc = geojson::parse(text::read_file(a.run / "gridsearch.json"),
                                    (a.run / "gridsearch.json").string());
    const auto cells = cells_from_json(doc.at("cells"));
    const double bt = doc.at("best").at("tile_size").get<double>();
    const double bn = doc.at("best").at("nms_iou").get<double>();
    const auto it = std::find_if(cells.begin(), cells.end(), [&](const GridCell& c) {
      return c.tile_size == bt && c.nms_iou == bn && c.present();
    });
    if (it == cells.end()) throw Error("best cell missing from gridsearch.json");
    ReportMeta meta{a.site.empty() ? doc.at("site").get<std::string>() : a.site,
                    a.model.empty() ? doc.at("model").get<std::string>() : a.model};
    emit_gridsearch_reports(cells, *it, doc.at("min_tile_size").get<double>(), out, meta);
    if (out != a.run) {
      write_manifest(out, "report", {{"run", a.run.string()}}, {a.run / "gridsearch.json"}, common);
    }
    return 0;
  }
  if (fs::is_regular_file(a.run / "eval.json")) {
    const auto doc = geojson::parse(text::read_file(a.run / "eval.json"), (a.run / "eval.json").string());
    const auto r = eval_from_json(doc);
    ReportMeta meta{a.site.empty() ? "plot" : a.site, a.model.empty() ? "model" : a.model};
    emit_eval_reports(r, out, meta, a.tile_size, a.nms_iou);
    if (out != a.run) {
      write_manifest(out, "report", {{"run", a.run.string()}}, {a.run / "eval.json"}, common);
    }
    return 0;
  }
  throw IoError("no eval.json or gridsearch.json in " + a.run.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crown labels from segmented TLS plots and detection evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--frozen-time", common.frozen_time, "fixed manifest timestamp (for tests)");

  LabelgenArgs lg;
  auto* c_lg = app.add_subcommand("labelgen", "crown labels from per-tree point clouds");
  c_lg->add_option("input", lg.input, "directory of <id>.xyz files or a plot .csv")->required();
  c_lg->add_option("-o,--out", lg.out, "output directory")->required();
  c_lg->add_option("--resolution", lg.resolution, "DSM cell size (m)")->capture_default_str();
  c_lg->add_option("--fill-window", lg.fill_window, "gap-fill radius (px)")->capture_default_str();
  c_lg->add_option("--corrections", lg.corrections, "CSV of tree_id,dx,dy shifts");
  c_lg->add_flag("--emit-rasters", lg.emit_rasters, "also write dsm.asc and index.asc");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "score detections against crown labels");
  c_ev->add_option("--labels", ev.labels)->required();
  c_ev->add_option("--detections", ev.detections)->required();
  c_ev->add_option("-o,--out", ev.out)->required();
  c_ev->add_option("--plot-extent", ev.plot_extent, "minx,miny,maxx,maxy");
  c_ev->add_option("--nms-iou", ev.nms_iou, "merge raw tiled detections with NMS at this IoU");
  c_ev->add_option("--tile-size", ev.tile_size);
  c_ev->add_option("--tile-unit", ev.tile_unit, "m or px")->capture_default_str();
  c_ev->add_option("--gsd", ev.gsd, "ground sample distance (cm/px)");
  c_ev->add_option("--overlap", ev.overlap)->capture_default_str();
  c_ev->add_option("--nms-scope", ev.scope, "global or tile")->capture_default_str();
  ev.eval.add(c_ev);

  GridsearchArgs gs;
  auto* c_gs = app.add_subcommand("gridsearch", "evaluate over tile size x NMS IoU");
  c_gs->add_option("--labels", gs.labels)->required();
  c_gs->add_option("--detections", gs.detections, "pooled raw detections");
  c_gs->add_option("--detections-dir", gs.detections_dir, "directory of tile_<size>.csv files");
  c_gs->add_option("-o,--out", gs.out)->required();
  c_gs->add_option("--plot-extent", gs.plot_extent, "minx,miny,maxx,maxy");
  c_gs->add_option("--tile-sizes", gs.tile_sizes)->delimiter(',')->required();
  c_gs->add_option("--nms-ious", gs.nms_ious)->delimiter(',')->required();
  c_gs->add_option("--tile-unit", gs.tile_unit, "m or px")->capture_default_str();
  c_gs->add_option("--gsd", gs.gsd, "ground sample distance (cm/px)");
  c_gs->add_option("--overlap", gs.overlap)->capture_default_str();
  c_gs->add_option("--nms-scope", gs.scope)->capture_default_str();
  c_gs->add_option("--min-tile-size", gs.min_tile_size, "'auto' or meters")->capture_default_str();
  gs.eval.add(c_gs);

  StatsArgs st;
  auto* c_st = app.add_subcommand("stats", "per-plot label summary");
  c_st->add_option("labels", st.labels)->required();
  c_st->add_option("--plot-id", st.plot_ids);
  c_st->add_option("--gsd", st.gsd, "cm/px");
  c_st->add_option("--dims", st.dims, "orthomosaic WIDTHxHEIGHT in px");
  c_st->add_option("-o,--out", st.out)->required();

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "synthetic plot with known crowns and detections");
  c_sy->add_option("-o,--out", sy.out)->required();
  c_sy->add_option("--seed", sy.scene.seed)->capture_default_str();
  c_sy->add_option("--n-trees", sy.scene.n_trees)->capture_default_str();
  c_sy->add_option("--plot-side", sy.scene.plot_side)->capture_default_str();
  c_sy->add_option("--shape", sy.shape, "cone or paraboloid")->capture_default_str();
  c_sy->add_option("--height-range", sy.heights)->delimiter(',')->capture_default_str();
  c_sy->add_option("--radius-range", sy.radii)->delimiter(',')->capture_default_str();
  c_sy->add_option("--points-per-tree", sy.scene.points_per_tree)->capture_default_str();
  c_sy->add_option("--overlap-intensity", sy.scene.overlap)->capture_default_str();
  c_sy->add_option("--tp-rate", sy.tp_rate)->capture_default_str();
  c_sy->add_option("--fp-count", sy.fp_count)->capture_default_str();
  c_sy->add_option("--jitter", sy.jitter, "m")->capture_default_str();
  c_sy->add_option("--detection-seed", sy.det_seed);
  c_sy->add_option("--resolution", sy.resolution)->capture_default_str();
  c_sy->add_option("--fill-window", sy.fill_window)->capture_default_str();

  ReportArgs rp;
  auto* c_rp = app.add_subcommand("report", "re-render reports from eval.json or gridsearch.json");
  c_rp->add_option("run", rp.run, "directory of an evaluate or gridsearch run")->required();
  c_rp->add_option("-o,--out", rp.out);
  c_rp->add_option("--site", rp.site);
  c_rp->add_option("--model", rp.model);
  c_rp->add_option("--tile-size", rp.tile_size);
  c_rp->add_option("--nms-iou", rp.nms_iou);

  try {
    app.parse(argc, argv);
    if (c_lg->parsed()) return cmd_labelgen(lg, common);
    if (c_ev->parsed()) return cmd_evaluate(ev, common);
    if (c_gs->parsed()) return cmd_gridsearch(gs, common);
    if (c_st->parsed()) return cmd_stats(st, common);
    if (c_sy->parsed()) return cmd_synth(sy, common);
    if (c_rp->parsed()) return cmd_report(rp, common);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
