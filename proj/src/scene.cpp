#include "nbrush/scene.hpp"

#include "nbrush/error.hpp"

#include <fstream>

namespace nbrush {

namespace {

using nlohmann::json;

Vec3 vec3_of(const json& node, const char* key, const Vec3& fallback) {
  if (!node.contains(key)) return fallback;
  const json& v = node.at(key);
  if (!v.is_array() || v.size() != 3) throw DataError(std::string("'") + key + "' must be a 3-element array");
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

Vec3 require_vec3(const json& node, const char* key) {
  if (!node.contains(key)) throw DataError(std::string("missing '") + key + "'");
  return vec3_of(node, key, Vec3::Zero());
}

double require_number(const json& node, const char* key) {
  if (!node.contains(key) || !node.at(key).is_number()) {
    throw DataError(std::string("missing numeric '") + key + "'");
  }
  return node.at(key).get<double>();
}

ScalarField fold_children(const json& node, bool smooth) {
  if (!node.contains("children") || !node.at("children").is_array() || node.at("children").empty()) {
    throw DataError("'children' must be a non-empty array");
  }
  const double k = smooth ? require_number(node, "k") : 0.0;
  const json& children = node.at("children");
  ScalarField acc = parse_field(children[0]);
  for (std::size_t i = 1; i < children.size(); ++i) {
    acc = smooth ? sdf::smooth_union(acc, parse_field(children[i]), k) : sdf::union_of(acc, parse_field(children[i]));
  }
  return acc;
}

}  // namespace

ScalarField parse_field(const json& node) {
  if (!node.is_object() || !node.contains("type")) throw DataError("field node must be an object with a 'type'");
  const std::string type = node.at("type").get<std::string>();
  const Vec3 center = vec3_of(node, "center", Vec3::Zero());
  if (type == "sphere") return sdf::sphere(center, require_number(node, "radius"));
  if (type == "box") return sdf::box(center, require_vec3(node, "half_extent"));
  if (type == "torus") {
    return sdf::torus(center, require_number(node, "major_radius"), require_number(node, "minor_radius"));
  }
  if (type == "capsule") {
    return sdf::capsule(require_vec3(node, "a"), require_vec3(node, "b"), require_number(node, "radius"));
  }
  if (type == "constant") return sdf::constant(require_number(node, "value"));
  if (type == "union") return fold_children(node, false);
  if (type == "smooth_union") return fold_children(node, true);
  if (type == "subtract") {
    if (!node.contains("a") || !node.contains("b")) throw DataError("subtract needs 'a' and 'b'");
    return sdf::subtract(parse_field(node.at("a")), parse_field(node.at("b")));
  }
  if (type == "displace") {
    if (!node.contains("field")) throw DataError("displace needs 'field'");
    const auto seed = node.value("seed", std::uint64_t{0});
    return sdf::displace(parse_field(node.at("field")), require_number(node, "amplitude"),
                         require_number(node, "frequency"), seed);
  }
  throw DataError("unknown field type '" + type + "'");
}

Scene parse_scene(const json& doc) {
  try {
    Scene scene;
    if (!doc.is_object() || !doc.contains("field")) throw DataError("scene must be an object with a 'field'");
    scene.field = parse_field(doc.at("field"));
    if (doc.contains("bounds")) {
      const json& b = doc.at("bounds");
      scene.bounds.min = require_vec3(b, "min");
      scene.bounds.max = require_vec3(b, "max");
    }
    if (doc.contains("resolution")) scene.resolution = doc.at("resolution").get<int>();
    return scene;
  } catch (const json::exception& e) {
    throw DataError(std::string("scene: ") + e.what());
  }
}

Scene read_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scene file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    return parse_scene(doc);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

nlohmann::json demo_scene(bool detailed) {
  const nlohmann::json sphere = {{"type", "sphere"}, {"center", {0, 0, 0}}, {"radius", 0.4}};
  if (!detailed) return {{"resolution", 48}, {"field", sphere}};
  return {{"resolution", 96},
          {"field", {{"type", "displace"}, {"amplitude", 0.03}, {"frequency", 8.0}, {"seed", 7}, {"field", sphere}}}};
}

TriangleMesh extract_scene(const Scene& scene, int fallback) {
  return marching_cubes(sample_grid(scene.field, scene.resolution.value_or(fallback), scene.bounds));
}

}  // namespace nbrush
