#pragma once

#include "nbrush/fields.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>

namespace nbrush {

// Declarative field description. Root object:
//
//   {
//     "bounds": {"min": [x, y, z], "max": [x, y, z]},   // optional, default [-0.5, 0.5]^3
//     "resolution": 64,                                  // optional
//     "field": <node>
//   }
//
// Nodes (by "type"):
//   sphere        center, radius
//   box           center, half_extent
//   torus         center, major_radius, minor_radius  (ring in the xz plane)
//   capsule       a, b, radius
//   constant      value
//   union         children: [node, ...]
//   smooth_union  k, children: [node, ...]
//   subtract      a: node, b: node                   (a minus b)
//   displace      amplitude, frequency, seed, field: node
//
// Vector parameters are 3-element arrays; "center" defaults to the origin.
struct Scene {
  ScalarField field;
  GridBounds bounds;
  std::optional<int> resolution;
};

ScalarField parse_field(const nlohmann::json& node);
Scene parse_scene(const nlohmann::json& doc);
Scene read_scene_file(const std::filesystem::path& path);

// Built-in demo pair: a sphere of radius 0.4 at resolution 48, and the same
// sphere under seeded noise displacement (amplitude 0.03, frequency 8, seed 7)
// at resolution 96.
nlohmann::json demo_scene(bool detailed);
// Marching cubes of a scene at its own resolution, or `fallback` when it has none.
TriangleMesh extract_scene(const Scene& scene, int fallback = 64);

}  // namespace nbrush
