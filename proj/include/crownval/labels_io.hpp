#pragma once

// FeatureCollection encoding of crown labels.
//
// One Polygon feature per crown with properties tree_id, max_height_m and
// area_m2. max_height_m may be null (labels drawn without height data).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crownval/error.hpp"
#include "crownval/geom.hpp"
#include "crownval/labelgen.hpp"
#include "crownval/textio.hpp"

namespace crownval {

namespace geojson {

using nlohmann::json;

inline json ring_to_json(const Ring& r) {
  json out = json::array();
  for (const auto& v : r) out.push_back(json::array({v.x, v.y}));
  return out;
}

inline json polygon_to_json(const Polygon& p) {
  json rings = json::array();
  rings.push_back(ring_to_json(p.exterior()));
  for (const auto& h : p.interiors()) rings.push_back(ring_to_json(h));
  return json{{"type", "Polygon"}, {"coordinates", std::move(rings)}};
}

inline Ring ring_from_json(const json& j) {
  if (!j.is_array()) throw Error("ring is not an array");
  Ring r;
  for (const auto& v : j) {
    if (!v.is_array() || v.size() < 2 || !v[0].is_number() || !v[1].is_number()) {
      throw Error("malformed ring vertex");
    }
    r.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  return r;
}

inline Polygon polygon_from_json(const json& geometry) {
  if (!geometry.is_object() || geometry.value("type", "") != "Polygon") {
    throw Error("geometry must be a Polygon");
  }
  const auto& coords = geometry.at("coordinates");
  if (!coords.is_array() || coords.empty()) throw Error("polygon has no rings");
  std::vector<Ring> holes;
  for (std::size_t i = 1; i < coords.size(); ++i) holes.push_back(ring_from_json(coords[i]));
  return Polygon(ring_from_json(coords[0]), std::move(holes));
}

/// Parses a FeatureCollection document and returns its feature array.
inline const json& features_of(const json& doc, const std::string& source) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw ParseError(source, 1, "not a FeatureCollection");
  }
  return doc["features"];
}

inline json parse(const std::string& content, const std::string& source) {
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 1, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace geojson

inline std::string labels_to_geojson(std::span<const CrownLabel> labels) {
  using geojson::json;
  json features = json::array();
  for (const auto& l : labels) {
    json props = {{"tree_id", l.tree_id},
                  {"max_height_m", l.max_height ? json(*l.max_height) : json(nullptr)},
                  {"area_m2", l.area}};
    features.push_back(json{{"type", "Feature"},
                            {"properties", std::move(props)},
                            {"geometry", geojson::polygon_to_json(l.footprint)}});
  }
  return json{{"type", "FeatureCollection"}, {"features", std::move(features)}}.dump(1) + "\n";
}

inline void write_labels(const std::filesystem::path& path, std::span<const CrownLabel> labels) {
  text::write_file(path, labels_to_geojson(labels));
}

inline std::vector<CrownLabel> read_labels(const std::filesystem::path& path) {
  const auto doc = geojson::parse(text::read_file(path), path.string());
  const auto& features = geojson::features_of(doc, path.string());
  std::vector<CrownLabel> labels;
  std::size_t n = 0;
  for (const auto& f : features) {
    ++n;
    try {
      const auto& props = f.at("properties");
      Polygon fp = geojson::polygon_from_json(f.at("geometry"));
      const BBox bbox = polygon_bbox(fp);
      std::optional<double> h;
      if (props.contains("max_height_m") && !props["max_height_m"].is_null()) {
        h = props["max_height_m"].get<double>();
      }
      const double area = props.contains("area_m2") && !props["area_m2"].is_null()
                              ? props["area_m2"].get<double>()
                              : polygon_area(fp);
      const auto id = props.contains("tree_id") ? props["tree_id"].get<TreeId>()
                                                : static_cast<TreeId>(n - 1);
      labels.push_back(CrownLabel{id, std::move(fp), bbox, h, area});
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(path.string(), n, std::string("feature: ") + e.what());
    }
  }
  return labels;
}

}  // namespace crownval
