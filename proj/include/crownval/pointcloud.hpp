#pragma once

// Ingestion of individually segmented tree point clouds.
//
// Two interchangeable encodings are supported:
//   <id>.xyz   one file per tree, whitespace separated "x y z", '#' comments
//   plot.csv   header x,y,z,tree_id (any column order), one point per row

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crownval/error.hpp"
#include "crownval/geom.hpp"
#include "crownval/textio.hpp"

namespace crownval {

using TreeId = std::int64_t;

struct TreeCloud {
  TreeId id = 0;
  std::vector<Point3D> points;

  double max_z() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& p : points) m = std::max(m, p.z);
    return m;
  }

  bool operator==(const TreeCloud&) const = default;
};

struct PlotCloudSet {
  std::string plot_id;
  std::vector<TreeCloud> trees;  // sorted by id, ids unique

  bool operator==(const PlotCloudSet&) const = default;
};

/// Validates and normalises a set of trees into a plot (sorted by id).
inline PlotCloudSet make_plot(std::string plot_id, std::vector<TreeCloud> trees) {
  if (trees.empty()) throw Error("plot '" + plot_id + "' has no trees");
  std::sort(trees.begin(), trees.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < trees.size(); ++i) {
    if (trees[i].id < 0) throw Error("negative tree id " + std::to_string(trees[i].id));
    if (trees[i].points.empty()) {
      throw Error("tree " + std::to_string(trees[i].id) + " has no points");
    }
    if (i > 0 && trees[i].id == trees[i - 1].id) {
      throw Error("duplicate tree id " + std::to_string(trees[i].id));
    }
    for (const auto& p : trees[i].points) {
      if (!all_finite(p)) throw Error("non-finite point in tree " + std::to_string(trees[i].id));
    }
  }
  return PlotCloudSet{std::move(plot_id), std::move(trees)};
}

/// Tight planar bounds over every point of every tree. Throws when the list is
/// empty or the points span zero width or height.
inline BBox plot_extent(std::span<const TreeCloud> trees) {
  double minx = std::numeric_limits<double>::infinity(), miny = minx;
  double maxx = -minx, maxy = -minx;
  bool any = false;
  for (const auto& t : trees) {
    for (const auto& p : t.points) {
      minx = std::min(minx, p.x);
      miny = std::min(miny, p.y);
      maxx = std::max(maxx, p.x);
      maxy = std::max(maxy, p.y);
      any = true;
    }
  }
  if (!any) throw Error("plot extent of an empty tree list");
  return BBox(minx, miny, maxx, maxy);
}

inline BBox plot_extent(const PlotCloudSet& plot) { return plot_extent(plot.trees); }

inline TreeId tree_id_from_stem(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  const bool digits = !stem.empty() && std::all_of(stem.begin(), stem.end(),
                                                    [](char c) { return c >= '0' && c <= '9'; });
  const auto id = digits ? text::parse_int(stem) : std::nullopt;
  if (!id) throw IoError(path.string() + ": file stem '" + stem + "' is not a decimal tree id");
  return *id;
}

inline TreeCloud read_tree_xyz(const std::filesystem::path& path) {
  TreeCloud tree;
  tree.id = tree_id_from_stem(path);
  const std::string content = text::read_file(path);
  std::size_t lineno = 0;
  for (auto line : text::lines(content)) {
    ++lineno;
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = text::split_ws(line);
    if (fields.size() < 3) throw ParseError(path.string(), lineno, "expected at least 3 fields");
    Point3D p;
    const auto x = text::parse_double(fields[0]);
    const auto y = text::parse_double(fields[1]);
    const auto z = text::parse_double(fields[2]);
    if (!x || !y || !z) throw ParseError(path.string(), lineno, "non-numeric coordinate");
    p = {*x, *y, *z};
    if (!all_finite(p)) throw ParseError(path.string(), lineno, "non-finite coordinate");
    tree.points.push_back(p);
  }
  if (tree.points.empty()) throw IoError(path.string() + ": no points");
  return tree;
}

inline void write_tree_xyz(const std::filesystem::path& path, const TreeCloud& tree) {
  std::string out;
  out.reserve(tree.points.size() * 40);
  for (const auto& p : tree.points) {
    out += text::exact(p.x);
    out += ' ';
    out += text::exact(p.y);
    out += ' ';
    out += text::exact(p.z);
    out += '\n';
  }
  text::write_file(path, out);
}

/// Reads every *.xyz file in a directory into one plot.
inline PlotCloudSet read_tree_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xyz") files.push_back(entry.path());
  }
  if (files.empty()) throw IoError("no .xyz files in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<TreeCloud> trees;
  trees.reserve(files.size());
  for (const auto& f : files) trees.push_back(read_tree_xyz(f));
  return make_plot(fs::absolute(dir).lexically_normal().filename().string(), std::move(trees));
}

inline PlotCloudSet read_plot_csv(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  const auto rows = text::lines(content);
  std::size_t lineno = 0;
  while (lineno < rows.size() && text::trim(rows[lineno]).empty()) ++lineno;
  if (lineno == rows.size()) throw ParseError(path.string(), 1, "missing header");
  const auto header = text::split(rows[lineno], ',');
  ++lineno;
  auto column = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ParseError(path.string(), 1, "missing column '" + std::string(name) + "'");
  };
  const std::size_t cx = column("x"), cy = column("y"), cz = column("z"), cid = column("tree_id");
  const std::size_t need = std::max({cx, cy, cz, cid}) + 1;

  std::map<TreeId, TreeCloud> grouped;
  for (; lineno < rows.size(); ++lineno) {
    const auto line = text::trim(rows[lineno]);
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() < need) throw ParseError(path.string(), lineno + 1, "too few columns");
    const auto x = text::parse_double(f[cx]);
    const auto y = text::parse_double(f[cy]);
    const auto z = text::parse_double(f[cz]);
    const auto id = text::parse_int(f[cid]);
    if (!x || !y || !z) throw ParseError(path.string(), lineno + 1, "non-numeric coordinate");
    if (!id) throw ParseError(path.string(), lineno + 1, "tree_id is not an integer");
    if (*id < 0) throw ParseError(path.string(), lineno + 1, "negative tree_id");
    const Point3D p{*x, *y, *z};
    if (!all_finite(p)) throw ParseError(path.string(), lineno + 1, "non-finite coordinate");
    auto& tree = grouped[*id];
    tree.id = *id;
    tree.points.push_back(p);
  }
  if (grouped.empty()) throw ParseError(path.string(), lineno, "no data rows");
  std::vector<TreeCloud> trees;
  trees.reserve(grouped.size());
  for (auto& [id, tree] : grouped) trees.push_back(std::move(tree));
  return make_plot(path.stem().string(), std::move(trees));
}

inline void write_plot_csv(const std::filesystem::path& path, const PlotCloudSet& plot) {
  std::string out = "x,y,z,tree_id\n";
  for (const auto& t : plot.trees) {
    for (const auto& p : t.points) {
      out += text::exact(p.x) + ',' + text::exact(p.y) + ',' + text::exact(p.z) + ',' +
             std::to_string(t.id) + '\n';
    }
  }
  text::write_file(path, out);
}

/// Loads a plot from a directory of .xyz files, a directory holding a single
/// plot .csv, or a .csv path.
inline PlotCloudSet read_plot(const std::filesystem::path& input) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(input)) {
    if (input.extension() == ".csv") return read_plot_csv(input);
    if (input.extension() == ".xyz") {
      return make_plot(input.stem().string(), {read_tree_xyz(input)});
    }
    throw IoError("unsupported point cloud file: " + input.string());
  }
  if (!fs::is_directory(input)) throw IoError("input not found: " + input.string());
  bool has_xyz = false;
  std::vector<fs::path> csvs;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".xyz") has_xyz = true;
    if (entry.path().extension() == ".csv") csvs.push_back(entry.path());
  }
  if (has_xyz) return read_tree_dir(input);
  if (csvs.size() == 1) return read_plot_csv(csvs.front());
  if (csvs.empty()) throw IoError("no .xyz or .csv point clouds in " + input.string());
  throw IoError("ambiguous input: several .csv files in " + input.string());
}

}  // namespace crownval
