#pragma once

// ESRI ASCII grid output for the canopy mosaic bands.
//
// Files are written top row first, as the format requires; in memory row 0 is
// the bottom row. Empty cells are written as NODATA_value -9999.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>

#include "crownval/geom.hpp"
#include "crownval/textio.hpp"

namespace crownval {

inline constexpr double kNoHeight = -std::numeric_limits<double>::infinity();
inline constexpr std::int64_t kNoTree = -1;
inline constexpr double kAsciiNoData = -9999.0;

inline bool has_height(double v) { return v != kNoHeight; }

namespace detail {

inline std::string ascii_header(const GridSpec& g) {
  return "ncols " + std::to_string(g.ncols) + "\nnrows " + std::to_string(g.nrows) +
         "\nxllcorner " + text::exact(g.origin_x()) + "\nyllcorner " + text::exact(g.origin_y()) +
         "\ncellsize " + text::exact(g.resolution) + "\nNODATA_value -9999\n";
}

template <typename T, typename Fmt>
void write_ascii(const std::filesystem::path& path, const Grid<T>& grid, Fmt&& fmt) {
  std::string out = ascii_header(grid.spec);
  out.reserve(out.size() + grid.values.size() * 8);
  for (std::int64_t row = grid.spec.nrows - 1; row >= 0; --row) {
    for (std::int64_t col = 0; col < grid.spec.ncols; ++col) {
      if (col > 0) out += ' ';
      out += fmt(grid.at(col, row));
    }
    out += '\n';
  }
  text::write_file(path, out);
}

}  // namespace detail

inline void write_ascii_grid(const std::filesystem::path& path, const Grid<double>& grid) {
  detail::write_ascii(path, grid, [](double v) {
    return has_height(v) ? text::exact(v) : std::string("-9999");
  });
}

inline void write_ascii_grid(const std::filesystem::path& path, const Grid<std::int64_t>& grid) {
  detail::write_ascii(path, grid, [](std::int64_t v) {
    return v == kNoTree ? std::string("-9999") : std::to_string(v);
  });
}

/// Reads an ESRI ASCII grid; NODATA cells become kNoHeight. The lower-left
/// corner must lie on the cellsize lattice.
inline Grid<double> read_ascii_grid(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  const auto rows = text::lines(content);
  std::map<std::string, double> header;
  std::size_t lineno = 0;
  for (; lineno < rows.size() && header.size() < 6; ++lineno) {
    const auto f = text::split_ws(rows[lineno]);
    if (f.size() != 2) throw ParseError(path.string(), lineno + 1, "malformed header line");
    std::string key(f[0]);
    for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const auto v = text::parse_double(f[1]);
    if (!v) throw ParseError(path.string(), lineno + 1, "non-numeric header value");
    header[key] = *v;
  }
  for (const char* key : {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"}) {
    if (!header.count(key)) throw ParseError(path.string(), lineno, std::string("missing ") + key);
  }
  const auto ncols = static_cast<std::int64_t>(header["ncols"]);
  const auto nrows = static_cast<std::int64_t>(header["nrows"]);
  const double nodata = header["nodata_value"];
  Grid<double> grid(GridSpec::from_origin(header["xllcorner"], header["yllcorner"],
                                          header["cellsize"], ncols, nrows),
                    kNoHeight);
  std::int64_t row = nrows - 1;
  for (; lineno < rows.size() && row >= 0; ++lineno) {
    const auto f = text::split_ws(rows[lineno]);
    if (f.empty()) continue;
    if (static_cast<std::int64_t>(f.size()) != ncols) {
      throw ParseError(path.string(), lineno + 1, "expected " + std::to_string(ncols) + " values");
    }
    for (std::int64_t col = 0; col < ncols; ++col) {
      const auto v = text::parse_double(f[static_cast<std::size_t>(col)]);
      if (!v) throw ParseError(path.string(), lineno + 1, "non-numeric cell");
      grid.at(col, row) = (*v == nodata) ? kNoHeight : *v;
    }
    --row;
  }
  if (row >= 0) throw ParseError(path.string(), lineno, "too few rows");
  return grid;
}

}  // namespace crownval
