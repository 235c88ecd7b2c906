#pragma once

#include "nbrush/mesh.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace nbrush {

// Signed distance-like scalar field; negative inside. Values <= 0 are
// occupied. Fields are immutable and cheap to copy.
class ScalarField {
 public:
  class Node {
   public:
    virtual ~Node() = default;
    virtual double eval(const Vec3& p) const = 0;
  };

  ScalarField() = default;
  explicit ScalarField(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  double operator()(const Vec3& p) const { return node_->eval(p); }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  std::shared_ptr<const Node> node_;
};

namespace sdf {

ScalarField constant(double value);
ScalarField sphere(const Vec3& center, double radius);
ScalarField box(const Vec3& center, const Vec3& half_extent);
// Torus around the y axis through `center`.
ScalarField torus(const Vec3& center, double major_radius, double minor_radius);
ScalarField capsule(const Vec3& a, const Vec3& b, double radius);

ScalarField union_of(ScalarField a, ScalarField b);
// Polynomial smooth minimum with blend radius k.
ScalarField smooth_union(ScalarField a, ScalarField b, double k);
// a minus b.
ScalarField subtract(ScalarField a, ScalarField b);
// field(p) + amplitude * value_noise(frequency * p, seed).
ScalarField displace(ScalarField field, double amplitude, double frequency, std::uint64_t seed);

}  // namespace sdf

// Seeded 3D value noise in [-1, 1]. Lattice values come from a splitmix64 hash
// of (x, y, z, seed); interpolation is trilinear with quintic fade weights
// 6t^5 - 15t^4 + 10t^3.
double value_noise(const Vec3& p, std::uint64_t seed);

bool occupancy_at(const ScalarField& field, const Vec3& point);

struct GridBounds {
  Vec3 min = Vec3::Constant(-0.5);
  Vec3 max = Vec3::Constant(0.5);
};

// Field samples on a regular lattice; index = i + nx * (j + ny * k).
struct OccupancyGrid {
  std::array<int, 3> resolution{};
  GridBounds bounds;
  std::vector<double> values;

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(resolution[0]) * (static_cast<std::size_t>(j) +
                                                      static_cast<std::size_t>(resolution[1]) * k);
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 node_position(int i, int j, int k) const;
  Vec3 cell_size() const;
  bool occupied(int i, int j, int k) const { return at(i, j, k) <= 0.0; }
};

OccupancyGrid sample_grid(const ScalarField& field, std::array<int, 3> resolution, const GridBounds& bounds);
inline OccupancyGrid sample_grid(const ScalarField& field, int resolution, const GridBounds& bounds = {}) {
  return sample_grid(field, {resolution, resolution, resolution}, bounds);
}

// Extracts the iso-surface with a 256-case table generated from a consistent
// face-ambiguity rule, so neighbouring cells always agree and the output is
// watertight. Vertices on the same lattice edge are shared.
TriangleMesh marching_cubes(const OccupancyGrid& grid, double iso = 0.0);

struct UnitCubeTransform {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * p + translation; }
};

// Uniformly scales and centres the mesh so its bounding box is centred at the
// origin with longest side 1.
std::pair<TriangleMesh, UnitCubeTransform> normalize_to_unit_cube(const TriangleMesh& mesh);

struct SurfaceSamples {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<int> faces;  // source face of each sample
};

// Area-uniform samples: face chosen proportionally to area, barycentric
// coordinates uniform within the face.
SurfaceSamples sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

}  // namespace nbrush
