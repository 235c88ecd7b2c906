#include "nbrush/fields.hpp"

#include "nbrush/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

namespace nbrush {

namespace {

class ConstantNode final : public ScalarField::Node {
 public:
  explicit ConstantNode(double v) : v_(v) {}
  double eval(const Vec3&) const override { return v_; }

 private:
  double v_;
};

class SphereNode final : public ScalarField::Node {
 public:
  SphereNode(Vec3 c, double r) : c_(std::move(c)), r_(r) {}
  double eval(const Vec3& p) const override { return (p - c_).norm() - r_; }

 private:
  Vec3 c_;
  double r_;
};

class BoxNode final : public ScalarField::Node {
 public:
  BoxNode(Vec3 c, Vec3 h) : c_(std::move(c)), h_(std::move(h)) {}
  double eval(const Vec3& p) const override {
    const Vec3 q = (p - c_).cwiseAbs() - h_;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
  }

 private:
  Vec3 c_, h_;
};

class TorusNode final : public ScalarField::Node {
 public:
  TorusNode(Vec3 c, double major, double minor) : c_(std::move(c)), major_(major), minor_(minor) {}
  double eval(const Vec3& p) const override {
    const Vec3 q = p - c_;
    const double ring = std::hypot(q.x(), q.z()) - major_;
    return std::hypot(ring, q.y()) - minor_;
  }

 private:
  Vec3 c_;
  double major_, minor_;
};

class CapsuleNode final : public ScalarField::Node {
 public:
  CapsuleNode(Vec3 a, Vec3 b, double r) : a_(std::move(a)), b_(std::move(b)), r_(r) {}
  double eval(const Vec3& p) const override {
    const Vec3 ab = b_ - a_;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a_).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a_ + t * ab)).norm() - r_;
  }

 private:
  Vec3 a_, b_;
  double r_;
};

class BinaryNode final : public ScalarField::Node {
 public:
  enum class Op { kUnion, kSmoothUnion, kSubtract };
  BinaryNode(Op op, ScalarField a, ScalarField b, double k) : op_(op), a_(std::move(a)), b_(std::move(b)), k_(k) {}
  double eval(const Vec3& p) const override {
    const double da = a_(p);
    const double db = b_(p);
    switch (op_) {
      case Op::kUnion:
        return std::min(da, db);
      case Op::kSmoothUnion: {
        const double h = std::clamp(0.5 + 0.5 * (db - da) / k_, 0.0, 1.0);
        return db + (da - db) * h - k_ * h * (1.0 - h);
      }
      case Op::kSubtract:
        return std::max(da, -db);
    }
    return da;
  }

 private:
  Op op_;
  ScalarField a_, b_;
  double k_;
};

class DisplaceNode final : public ScalarField::Node {
 public:
  DisplaceNode(ScalarField f, double amplitude, double frequency, std::uint64_t seed)
      : f_(std::move(f)), amplitude_(amplitude), frequency_(frequency), seed_(seed) {}
  double eval(const Vec3& p) const override {
    return f_(p) + amplitude_ * value_noise(frequency_ * p, seed_);
  }

 private:
  ScalarField f_;
  double amplitude_, frequency_;
  std::uint64_t seed_;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lattice_value(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(x));
  h = splitmix64(h ^ static_cast<std::uint64_t>(y));
  h = splitmix64(h ^ static_cast<std::uint64_t>(z));
  // 53 high bits -> [0, 1) -> [-1, 1)
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

}  // namespace

namespace sdf {

ScalarField constant(double value) { return ScalarField(std::make_shared<ConstantNode>(value)); }

ScalarField sphere(const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw DataError("sphere radius must be positive");
  return ScalarField(std::make_shared<SphereNode>(center, radius));
}

ScalarField box(const Vec3& center, const Vec3& half_extent) {
  if (!(half_extent.minCoeff() > 0.0)) throw DataError("box half extents must be positive");
  return ScalarField(std::make_shared<BoxNode>(center, half_extent));
}

ScalarField torus(const Vec3& center, double major_radius, double minor_radius) {
  if (!(major_radius > 0.0 && minor_radius > 0.0)) throw DataError("torus radii must be positive");
  return ScalarField(std::make_shared<TorusNode>(center, major_radius, minor_radius));
}

ScalarField capsule(const Vec3& a, const Vec3& b, double radius) {
  if (!(radius > 0.0)) throw DataError("capsule radius must be positive");
  return ScalarField(std::make_shared<CapsuleNode>(a, b, radius));
}

ScalarField union_of(ScalarField a, ScalarField b) {
  return ScalarField(std::make_shared<BinaryNode>(BinaryNode::Op::kUnion, std::move(a), std::move(b), 0.0));
}

ScalarField smooth_union(ScalarField a, ScalarField b, double k) {
  if (!(k > 0.0)) return union_of(std::move(a), std::move(b));
  return ScalarField(std::make_shared<BinaryNode>(BinaryNode::Op::kSmoothUnion, std::move(a), std::move(b), k));
}

ScalarField subtract(ScalarField a, ScalarField b) {
  return ScalarField(std::make_shared<BinaryNode>(BinaryNode::Op::kSubtract, std::move(a), std::move(b), 0.0));
}

ScalarField displace(ScalarField field, double amplitude, double frequency, std::uint64_t seed) {
  return ScalarField(std::make_shared<DisplaceNode>(std::move(field), amplitude, frequency, seed));
}

}  // namespace sdf

double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  const double tx = fade(p.x() - fx), ty = fade(p.y() - fy), tz = fade(p.z() - fz);
  double c[2][2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) c[dz][dy][dx] = lattice_value(ix + dx, iy + dy, iz + dz, seed);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double y0 = lerp(lerp(c[0][0][0], c[0][0][1], tx), lerp(c[0][1][0], c[0][1][1], tx), ty);
  const double y1 = lerp(lerp(c[1][0][0], c[1][0][1], tx), lerp(c[1][1][0], c[1][1][1], tx), ty);
  return lerp(y0, y1, tz);
}

bool occupancy_at(const ScalarField& field, const Vec3& point) { return field(point) <= 0.0; }

Vec3 OccupancyGrid::cell_size() const {
  return Vec3((bounds.max.x() - bounds.min.x()) / (resolution[0] - 1),
              (bounds.max.y() - bounds.min.y()) / (resolution[1] - 1),
              (bounds.max.z() - bounds.min.z()) / (resolution[2] - 1));
}

Vec3 OccupancyGrid::node_position(int i, int j, int k) const {
  const Vec3 extent = bounds.max - bounds.min;
  return bounds.min + Vec3(extent.x() * i / (resolution[0] - 1), extent.y() * j / (resolution[1] - 1),
                           extent.z() * k / (resolution[2] - 1));
}

OccupancyGrid sample_grid(const ScalarField& field, std::array<int, 3> resolution, const GridBounds& bounds) {
  for (int r : resolution) {
    if (r < 2) throw DataError("grid resolution must be at least 2 per axis, got " + std::to_string(r));
  }
  for (int a = 0; a < 3; ++a) {
    if (!(bounds.min[a] < bounds.max[a])) throw DataError("grid bounds must satisfy min < max on every axis");
  }
  OccupancyGrid grid;
  grid.resolution = resolution;
  grid.bounds = bounds;
  grid.values.resize(static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2]);
  for (int k = 0; k < resolution[2]; ++k)
    for (int j = 0; j < resolution[1]; ++j)
      for (int i = 0; i < resolution[0]; ++i) grid.values[grid.index(i, j, k)] = field(grid.node_position(i, j, k));
  return grid;
}

// ---------------------------------------------------------------------------
// Marching cubes
// ---------------------------------------------------------------------------

namespace {

// Corner c sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1) inside the cell.
struct CubeEdge {
  int c0, c1;  // c1 = c0 | axis bit
  int axis;
};

struct CaseTable {
  std::array<CubeEdge, 12> edges{};
  std::array<std::vector<std::array<int, 3>>, 256> triangles;  // edge ids per case
};

Vec3 corner_offset(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

// Builds the triangle table. On each cube face the crossing points are joined
// into segments; when a face is ambiguous (diagonal corners agree) the inside
// corners are cut off. The rule depends only on the face's four corners, so
// adjacent cells produce matching segments. Segments are oriented so the
// inside corner lies on the right when the face is seen from outside the
// cube; chaining them gives loops whose fan triangles face the outside.
CaseTable build_case_table() {
  CaseTable table;
  int e = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const int bit = 1 << axis;
    for (int c = 0; c < 8; ++c) {
      if (c & bit) continue;
      table.edges[e++] = CubeEdge{c, c | bit, axis};
    }
  }
  auto edge_id = [&](int a, int b) {
    for (int k = 0; k < 12; ++k) {
      if ((table.edges[k].c0 == a && table.edges[k].c1 == b) || (table.edges[k].c0 == b && table.edges[k].c1 == a)) {
        return k;
      }
    }
    return -1;
  };
  auto edge_mid = [&](int k) -> Vec3 { return 0.5 * (corner_offset(table.edges[k].c0) + corner_offset(table.edges[k].c1)); };

  struct CubeFace {
    std::array<int, 4> cycle;
    Vec3 normal;
  };
  std::vector<CubeFace> faces;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = 1 << ((axis + 1) % 3);
    const int v = 1 << ((axis + 2) % 3);
    for (int side = 0; side < 2; ++side) {
      const int base = side ? (1 << axis) : 0;
      Vec3 n = Vec3::Zero();
      n[axis] = side ? 1.0 : -1.0;
      faces.push_back({{base, base | u, base | u | v, base | v}, n});
    }
  }

  for (int mask = 0; mask < 256; ++mask) {
    auto inside = [&](int c) { return ((mask >> c) & 1) != 0; };
    std::array<int, 12> next;
    next.fill(-1);
    for (const CubeFace& face : faces) {
      std::array<int, 4> crossing{};
      int count = 0;
      for (int k = 0; k < 4; ++k) {
        const int a = face.cycle[k], b = face.cycle[(k + 1) % 4];
        if (inside(a) != inside(b)) crossing[count++] = k;
      }
      std::vector<std::pair<int, int>> segments;  // (face edge slot, face edge slot)
      if (count == 2) {
        segments.emplace_back(crossing[0], crossing[1]);
      } else if (count == 4) {
        for (int k = 0; k < 4; ++k) {
          if (inside(face.cycle[k])) segments.emplace_back((k + 3) % 4, k);
        }
      }
      for (auto [sa, sb] : segments) {
        const int ea = edge_id(face.cycle[sa], face.cycle[(sa + 1) % 4]);
        const int eb = edge_id(face.cycle[sb], face.cycle[(sb + 1) % 4]);
        const int in_corner = inside(face.cycle[sa]) ? face.cycle[sa] : face.cycle[(sa + 1) % 4];
        const Vec3 p = edge_mid(ea), q = edge_mid(eb);
        const double orient = (q - p).cross(corner_offset(in_corner) - p).dot(face.normal);
        if (orient < 0.0) {
          next[ea] = eb;
        } else {
          next[eb] = ea;
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int cur = start; cur >= 0 && !used[cur]; cur = next[cur]) {
        used[cur] = true;
        loop.push_back(cur);
      }
      for (std::size_t k = 1; k + 1 < loop.size(); ++k) {
        table.triangles[mask].push_back({loop[0], loop[k], loop[k + 1]});
      }
    }
  }
  return table;
}

const CaseTable& case_table() {
  static const CaseTable table = build_case_table();
  return table;
}

}  // namespace

TriangleMesh marching_cubes(const OccupancyGrid& grid, double iso) {
  const CaseTable& table = case_table();
  const auto [nx, ny, nz] = grid.resolution;
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;

  auto vertex_for = [&](int i, int j, int k, const CubeEdge& ce) {
    const int i0 = i + (ce.c0 & 1), j0 = j + ((ce.c0 >> 1) & 1), k0 = k + ((ce.c0 >> 2) & 1);
    const std::uint64_t key = static_cast<std::uint64_t>(grid.index(i0, j0, k0)) * 3 + ce.axis;
    auto [it, inserted] = edge_vertex.emplace(key, static_cast<int>(mesh.vertices.size()));
    if (inserted) {
      const int i1 = i + (ce.c1 & 1), j1 = j + ((ce.c1 >> 1) & 1), k1 = k + ((ce.c1 >> 2) & 1);
      const double v0 = grid.at(i0, j0, k0), v1 = grid.at(i1, j1, k1);
      const double t = std::clamp((iso - v0) / (v1 - v0), 0.0, 1.0);
      const Vec3 p0 = grid.node_position(i0, j0, k0), p1 = grid.node_position(i1, j1, k1);
      mesh.vertices.push_back(p0 + t * (p1 - p0));
    }
    return it->second;
  };

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        int mask = 0;
        for (int c = 0; c < 8; ++c) {
          if (grid.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) <= iso) mask |= 1 << c;
        }
        for (const auto& tri : table.triangles[mask]) {
          Face f{};
          for (int s = 0; s < 3; ++s) f[s] = vertex_for(i, j, k, table.edges[tri[s]]);
          mesh.faces.push_back(f);
        }
      }
    }
  }
  return mesh;
}

std::pair<TriangleMesh, UnitCubeTransform> normalize_to_unit_cube(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) throw DataError("cannot normalize an empty mesh");
  const BoundingBox box = bounding_box(mesh);
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) throw DataError("cannot normalize a mesh with zero extent");
  UnitCubeTransform xf;
  xf.scale = 1.0 / longest;
  xf.translation = -xf.scale * box.center();
  TriangleMesh out = mesh;
  for (Vec3& p : out.vertices) p = xf.apply(p);
  return {std::move(out), xf};
}

SurfaceSamples sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  SurfaceSamples out;
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    total += face_area(mesh, f);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw DataError("cannot sample a mesh with zero surface area");
  if (n == 0) return out;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  out.points.reserve(n);
  out.normals.reserve(n);
  out.faces.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double pick = uniform(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto fi = static_cast<int>(it - cumulative.begin());
    const Face& f = mesh.faces[fi];
    const double r1 = std::sqrt(uniform(rng));
    const double r2 = uniform(rng);
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    out.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    out.normals.push_back(face_cross(mesh, f).normalized());
    out.faces.push_back(fi);
  }
  return out;
}

}  // namespace nbrush
