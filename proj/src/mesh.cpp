#include "nbrush/mesh.hpp"

#include "nbrush/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nbrush {

void TriangleMesh::validate() const {
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!vertices[i].allFinite()) {
      throw DataError("vertex " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  const int n = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (int idx : face) {
      if (idx < 0 || idx >= n) {
        throw DataError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                        " but the mesh has " + std::to_string(n) + " vertices");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw DataError("face " + std::to_string(f) + " repeats a vertex index");
    }
  }
}

MeshAdjacency::MeshAdjacency(const TriangleMesh& mesh) {
  mesh.validate();
  const std::size_t nv = mesh.vertices.size();
  neighbors_.assign(nv, {});
  vertex_faces_.assign(nv, {});

  std::vector<std::pair<Edge, int>> incidences;
  incidences.reserve(mesh.faces.size() * 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      vertex_faces_[face[k]].push_back(static_cast<int>(f));
      incidences.emplace_back(Edge(face[k], face[(k + 1) % 3]), static_cast<int>(f));
    }
  }
  std::sort(incidences.begin(), incidences.end(),
            [](const auto& x, const auto& y) { return std::tie(x.first, x.second) < std::tie(y.first, y.second); });

  for (const auto& [edge, face] : incidences) {
    if (edges_.empty() || !(edges_.back() == edge)) {
      edge_index_.emplace(edge.key(), static_cast<std::uint32_t>(edges_.size()));
      edges_.push_back(edge);
      edge_faces_.emplace_back();
      neighbors_[edge.a].push_back(edge.b);
      neighbors_[edge.b].push_back(edge.a);
    }
    edge_faces_.back().push_back(face);
  }
  for (auto& list : neighbors_) std::sort(list.begin(), list.end());
}

std::span<const int> MeshAdjacency::edge_faces(int i, int j) const {
  auto it = edge_index_.find(Edge(i, j).key());
  if (it == edge_index_.end()) return {};
  return edge_faces_[it->second];
}

bool MeshAdjacency::has_edge(int i, int j) const {
  return edge_index_.contains(Edge(i, j).key());
}

MeshAdjacency build_adjacency(const TriangleMesh& mesh) { return MeshAdjacency(mesh); }

double face_area(const TriangleMesh& mesh, const Face& f) { return 0.5 * face_cross(mesh, f).norm(); }

std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> sums(mesh.vertices.size(), Vec3::Zero());
  for (const Face& f : mesh.faces) {
    const Vec3 c = face_cross(mesh, f);
    if (0.5 * c.norm() < kDegenerateArea) continue;
    for (int idx : f) sums[idx] += c;
  }
  for (Vec3& n : sums) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
  }
  return sums;
}

namespace {

// Number of connected fans around v, where two incident faces are connected
// when they share an edge through v.
int star_components(const MeshAdjacency& adj, int v) {
  auto faces = adj.vertex_faces(v);
  if (faces.empty()) return 0;
  std::vector<int> parent(faces.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto local = [&](int face) {
    return static_cast<int>(std::lower_bound(faces.begin(), faces.end(), face) - faces.begin());
  };
  for (int w : adj.neighbors(v)) {
    auto shared = adj.edge_faces(v, w);
    for (std::size_t k = 1; k < shared.size(); ++k) {
      parent[find(local(shared[k]))] = find(local(shared[0]));
    }
  }
  int count = 0;
  for (std::size_t k = 0; k < faces.size(); ++k) count += find(static_cast<int>(k)) == static_cast<int>(k);
  return count;
}

}  // namespace

ManifoldReport validate_manifold(const TriangleMesh& mesh) {
  const MeshAdjacency adj(mesh);
  ManifoldReport r;
  r.vertex_count = static_cast<int>(mesh.vertices.size());
  r.face_count = static_cast<int>(mesh.faces.size());
  r.edge_count = static_cast<int>(adj.edges().size());
  for (std::size_t k = 0; k < adj.edges().size(); ++k) {
    const std::size_t n = adj.edge_faces_at(k).size();
    if (n == 1) ++r.boundary_edges;
    if (n > 2) ++r.nonmanifold_edges;
  }
  r.edge_violations = r.boundary_edges + r.nonmanifold_edges;
  for (int v = 0; v < r.vertex_count; ++v) {
    if (adj.vertex_faces(v).empty()) {
      ++r.isolated_vertices;
    } else if (star_components(adj, v) > 1) {
      ++r.nonmanifold_vertices;
    }
  }
  r.euler_characteristic = r.vertex_count - r.edge_count + r.face_count;
  r.closed = r.face_count > 0 && r.edge_violations == 0;
  return r;
}

BoundingBox bounding_box(const TriangleMesh& mesh) {
  BoundingBox box;
  for (const Vec3& p : mesh.vertices) box.extend(p);
  return box;
}

double mean_edge_length(const TriangleMesh& mesh) {
  const MeshAdjacency adj(mesh);
  if (adj.edges().empty()) return 0.0;
  double total = 0.0;
  for (const Edge& e : adj.edges()) total += (mesh.vertices[e.a] - mesh.vertices[e.b]).norm();
  return total / static_cast<double>(adj.edges().size());
}

namespace {

// Reorders each face so its normal points away from the centroid. Only valid
// for convex shapes.
void orient_convex(TriangleMesh& mesh) {
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : mesh.vertices) centroid += p;
  centroid /= static_cast<double>(mesh.vertices.size());
  for (Face& f : mesh.faces) {
    const Vec3 mid = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    if (face_cross(mesh, f).dot(mid - centroid) < 0.0) std::swap(f[1], f[2]);
  }
}

}  // namespace

TriangleMesh make_tetrahedron() {
  TriangleMesh m;
  m.vertices = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
  m.faces = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  orient_convex(m);
  return m;
}

TriangleMesh make_icosphere(int level, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {Vec3(-1, t, 0), Vec3(1, t, 0),   Vec3(-1, -t, 0), Vec3(1, -t, 0),
                Vec3(0, -1, t), Vec3(0, 1, t),   Vec3(0, -1, -t), Vec3(0, 1, -t),
                Vec3(t, 0, -1), Vec3(t, 0, 1),   Vec3(-t, 0, -1), Vec3(-t, 0, 1)};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (Vec3& p : m.vertices) p.normalize();
  orient_convex(m);

  for (int l = 0; l < level; ++l) {
    std::unordered_map<std::uint64_t, int> midpoint;
    auto mid = [&](int i, int j) {
      const Edge e(i, j);
      auto [it, inserted] = midpoint.emplace(e.key(), static_cast<int>(m.vertices.size()));
      if (inserted) m.vertices.push_back((m.vertices[i] + m.vertices[j]).normalized());
      return it->second;
    };
    std::vector<Face> next;
    next.reserve(m.faces.size() * 4);
    for (const Face& f : m.faces) {
      const int a = mid(f[0], f[1]);
      const int b = mid(f[1], f[2]);
      const int c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    m.faces = std::move(next);
  }
  for (Vec3& p : m.vertices) p *= radius;
  return m;
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int c = 0; c < 8; ++c) {
    m.vertices.emplace_back(c & 1 ? hi.x() : lo.x(), c & 2 ? hi.y() : lo.y(), c & 4 ? hi.z() : lo.z());
  }
  m.faces = {{0, 1, 3}, {0, 3, 2}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
             {2, 3, 7}, {2, 7, 6}, {0, 2, 6}, {0, 6, 4}, {1, 3, 7}, {1, 7, 5}};
  orient_convex(m);
  return m;
}

}  // namespace nbrush
