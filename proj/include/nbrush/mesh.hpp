#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

namespace nbrush {

using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

// Faces smaller than this (object units squared) are treated as degenerate.
inline constexpr double kDegenerateArea = 1e-12;

// Indexed triangle soup. Counter-clockwise winding faces outward.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const { return faces.empty(); }
  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }

  // Throws DataError when an index is out of range, a face repeats a vertex,
  // or a coordinate is not finite.
  void validate() const;
};

// Unordered vertex pair, stored with first < second.
struct Edge {
  int a = 0;
  int b = 0;

  Edge() = default;
  Edge(int i, int j) : a(i < j ? i : j), b(i < j ? j : i) {}

  std::uint64_t key() const {
    return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
  }
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class MeshAdjacency {
 public:
  MeshAdjacency() = default;
  explicit MeshAdjacency(const TriangleMesh& mesh);

  std::size_t vertex_count() const { return neighbors_.size(); }

  // Ascending vertex indices.
  std::span<const int> neighbors(int v) const { return neighbors_[v]; }
  // Ascending face indices.
  std::span<const int> vertex_faces(int v) const { return vertex_faces_[v]; }

  // Edges in ascending order; edge_faces(k) belongs to edges()[k].
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const int> edge_faces_at(std::size_t k) const { return edge_faces_[k]; }

  // Faces adjacent to the edge (i, j); empty when the edge does not exist.
  std::span<const int> edge_faces(int i, int j) const;
  bool has_edge(int i, int j) const;

  friend bool operator==(const MeshAdjacency&, const MeshAdjacency&) = default;

 private:
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::vector<int>> vertex_faces_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> edge_faces_;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_index_;
};

MeshAdjacency build_adjacency(const TriangleMesh& mesh);

// Unnormalized face normal; its length is twice the face area.
inline Vec3 face_cross(const TriangleMesh& mesh, const Face& f) {
  const Vec3& p0 = mesh.vertices[f[0]];
  return (mesh.vertices[f[1]] - p0).cross(mesh.vertices[f[2]] - p0);
}

double face_area(const TriangleMesh& mesh, const Face& f);

// Area-weighted vertex normals. Vertices whose incident faces are all
// degenerate get +z.
std::vector<Vec3> vertex_normals(const TriangleMesh& mesh);

struct ManifoldReport {
  bool closed = false;
  int boundary_edges = 0;     // edges with one adjacent face
  int nonmanifold_edges = 0;  // edges with more than two adjacent faces
  int edge_violations = 0;    // boundary_edges + nonmanifold_edges
  int nonmanifold_vertices = 0;
  int isolated_vertices = 0;
  int euler_characteristic = 0;
  int vertex_count = 0;
  int edge_count = 0;
  int face_count = 0;

  // Every edge has at most two faces and every vertex star is a single fan.
  bool manifold() const { return nonmanifold_edges == 0 && nonmanifold_vertices == 0; }
};

ManifoldReport validate_manifold(const TriangleMesh& mesh);

struct BoundingBox {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

BoundingBox bounding_box(const TriangleMesh& mesh);

double mean_edge_length(const TriangleMesh& mesh);

// Test geometry.
TriangleMesh make_tetrahedron();
// Icosahedron subdivided `level` times, projected to a sphere of `radius`.
TriangleMesh make_icosphere(int level, double radius = 1.0);
// Axis-aligned box [min, max] as 12 triangles.
TriangleMesh make_box(const Vec3& min, const Vec3& max);

}  // namespace nbrush
