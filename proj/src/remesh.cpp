#include "nbrush/remesh.hpp"

#include "nbrush/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

namespace nbrush {

double region_weight(Region r) {
  switch (r) {
    case Region::inactive: return 0.0;
    case Region::band: return 0.5;
    case Region::active: return 1.0;
  }
  return 0.0;
}

OptimizerState OptimizerState::fresh(const TriangleMesh& mesh) {
  OptimizerState s;
  const std::size_t n = mesh.vertices.size();
  s.m1.assign(n, Vec3::Zero());
  s.m2.assign(n, 0.0);
  s.speed.assign(n, 0.0);
  s.x_init = mesh.vertices;
  return s;
}

void OptimizerState::check_aligned(std::size_t n) const {
  if (m1.size() != n || m2.size() != n || speed.size() != n || x_init.size() != n ||
      (!region.empty() && region.size() != n)) {
    throw DataError("optimizer state has " + std::to_string(x_init.size()) + " entries for " + std::to_string(n) +
                    " vertices");
  }
}

std::vector<Vec3> laplacian_apply(const MeshAdjacency& adjacency, const std::vector<Vec3>& field) {
  if (field.size() != adjacency.vertex_count()) {
    throw DataError("laplacian field has " + std::to_string(field.size()) + " entries for " +
                    std::to_string(adjacency.vertex_count()) + " vertices");
  }
  std::vector<Vec3> out(field.size(), Vec3::Zero());
  for (std::size_t i = 0; i < field.size(); ++i) {
    const auto nb = adjacency.neighbors(static_cast<int>(i));
    if (nb.empty()) continue;
    Vec3 sum = Vec3::Zero();
    for (int j : nb) sum += field[j];
    out[i] = sum / static_cast<double>(nb.size()) - field[i];
  }
  return out;
}

std::vector<Vec3> adam_step(OptimizerState& state, const std::vector<Vec3>& gradients, const AdamParams& p) {
  const std::size_t n = state.size();
  state.check_aligned(n);
  if (gradients.size() != n) {
    throw DataError("gradient has " + std::to_string(gradients.size()) + " entries for " + std::to_string(n) +
                    " vertices");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!gradients[i].allFinite()) throw NumericError("non-finite gradient at vertex " + std::to_string(i));
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(p.beta1, state.t);
  const double c2 = 1.0 - std::pow(p.beta2, state.t);
  std::vector<Vec3> step(n);
  for (std::size_t i = 0; i < n; ++i) {
    state.m1[i] = p.beta1 * state.m1[i] + (1.0 - p.beta1) * gradients[i];
    state.m2[i] = p.beta2 * state.m2[i] + (1.0 - p.beta2) * gradients[i].squaredNorm();
    const Vec3 m1_hat = state.m1[i] / c1;
    const double denom = std::sqrt(state.m2[i] / c2) + p.epsilon;
    step[i] = -p.learning_rate * m1_hat / denom;
    state.speed[i] = std::min(1.0, m1_hat.norm() / denom);
  }
  return step;
}

std::vector<Vec3> relative_laplacian_update(const std::vector<Vec3>& x, const std::vector<Vec3>& x_init,
                                            double lambda, const std::vector<double>& v,
                                            const MeshAdjacency& adjacency) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DataError("lambda must lie in [0, 1]");
  if (x_init.size() != x.size() || v.size() != x.size()) throw DataError("relative laplacian inputs differ in length");
  std::vector<Vec3> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - x_init[i];
  const std::vector<Vec3> wd = laplacian_apply(adjacency, d);
  std::vector<Vec3> out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = lambda * v[i];
    if (s != 0.0) out[i] = x_init[i] + d[i] + s * wd[i];
  }
  return out;
}

void RemeshParams::validate() const {
  if (!(l_target > 0.0) || !std::isfinite(l_target)) throw DataError("l_target must be positive");
  if (!(collapse_factor > 0.0 && collapse_factor < 1.0 && split_factor > 1.0)) {
    throw DataError("remesh factors must satisfy 0 < collapse < 1 < split");
  }
  if (interval < 1) throw DataError("remesh interval must be at least 1");
}

namespace {

struct VertexState {
  Vec3 m1;
  double m2;
  double speed;
  Vec3 x_init;
  Region region;
};

// Mesh plus per-vertex state with enough incidence data for local edits.
class WorkMesh {
 public:
  WorkMesh(const TriangleMesh& mesh, const OptimizerState& state) : pos_(mesh.vertices), faces_(mesh.faces) {
    const std::size_t n = pos_.size();
    vs_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      vs_[i] = {state.m1[i], state.m2[i], state.speed[i], state.x_init[i], state.region_of(i)};
    }
    rebuild_incidence();
  }

  std::vector<Vec3> pos_;
  std::vector<Face> faces_;
  std::vector<VertexState> vs_;
  std::vector<char> face_dead_;
  std::vector<char> vert_dead_;
  std::vector<std::vector<int>> vf_;

  void rebuild_incidence() {
    face_dead_.assign(faces_.size(), 0);
    vert_dead_.assign(pos_.size(), 0);
    vf_.assign(pos_.size(), {});
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      for (int v : faces_[f]) vf_[v].push_back(static_cast<int>(f));
    }
  }

  int add_vertex(const Vec3& p, const VertexState& s) {
    pos_.push_back(p);
    vs_.push_back(s);
    return static_cast<int>(pos_.size()) - 1;
  }

  static bool has(const Face& f, int v) { return f[0] == v || f[1] == v || f[2] == v; }

  std::vector<int> edge_faces(int a, int b) const {
    std::vector<int> out;
    for (int f : vf_[a]) {
      if (has(faces_[f], b)) out.push_back(f);
    }
    return out;
  }

  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (int f : vf_[v]) {
      for (int u : faces_[f]) {
        if (u != v) out.push_back(u);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool boundary_vertex(int v) const {
    for (int u : neighbors(v)) {
      if (edge_faces(v, u).size() == 1) return true;
    }
    return false;
  }

  bool has_face_with(int a, int b, int c) const {
    for (int f : vf_[a]) {
      if (has(faces_[f], b) && has(faces_[f], c)) return true;
    }
    return false;
  }

  bool editable(int f) const {
    for (int v : faces_[f]) {
      if (vs_[v].region == Region::active) return true;
    }
    return false;
  }

  Vec3 cross(const Face& f) const { return (pos_[f[1]] - pos_[f[0]]).cross(pos_[f[2]] - pos_[f[0]]); }

  int third(int f, int a, int b) const {
    for (int v : faces_[f]) {
      if (v != a && v != b) return v;
    }
    return -1;
  }

  void remove_incidence(int v, int f) {
    auto& list = vf_[v];
    list.erase(std::find(list.begin(), list.end(), f));
  }
};

VertexState average(const VertexState& a, const VertexState& b) {
  return {0.5 * (a.m1 + b.m1), 0.5 * (a.m2 + b.m2), 0.5 * (a.speed + b.speed), 0.5 * (a.x_init + b.x_init),
          std::min(a.region, b.region)};
}

Face rotated(const Face& f, int k) { return {f[k % 3], f[(k + 1) % 3], f[(k + 2) % 3]}; }

void split_edges(WorkMesh& w, const MeshAdjacency& adj, double max_length, RemeshStats& stats) {
  std::unordered_map<std::uint64_t, int> mid;
  const auto& edges = adj.edges();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge& e = edges[k];
    if ((w.pos_[e.a] - w.pos_[e.b]).norm() <= max_length) continue;
    bool allowed = true;
    for (int f : adj.edge_faces_at(k)) allowed = allowed && w.editable(f);
    if (!allowed) continue;
    mid[e.key()] = w.add_vertex(0.5 * (w.pos_[e.a] + w.pos_[e.b]), average(w.vs_[e.a], w.vs_[e.b]));
    ++stats.splits;
  }
  if (mid.empty()) return;

  auto mid_of = [&](int a, int b) {
    auto it = mid.find(Edge(a, b).key());
    return it == mid.end() ? -1 : it->second;
  };
  std::vector<Face> out;
  out.reserve(w.faces_.size() * 2);
  for (const Face& f : w.faces_) {
    // m[k] splits the edge from corner k to corner k+1.
    std::array<int, 3> m{mid_of(f[0], f[1]), mid_of(f[1], f[2]), mid_of(f[2], f[0])};
    const int count = (m[0] >= 0) + (m[1] >= 0) + (m[2] >= 0);
    if (count == 0) {
      out.push_back(f);
    } else if (count == 3) {
      out.push_back({f[0], m[0], m[2]});
      out.push_back({m[0], f[1], m[1]});
      out.push_back({m[2], m[1], f[2]});
      out.push_back({m[0], m[1], m[2]});
    } else if (count == 1) {
      const int k = m[0] >= 0 ? 0 : (m[1] >= 0 ? 1 : 2);
      const Face r = rotated(f, k);
      out.push_back({r[0], m[k], r[2]});
      out.push_back({m[k], r[1], r[2]});
    } else {
      // Rotate so the unsplit edge runs from corner 2 back to corner 0.
      const int k = m[2] < 0 ? 0 : (m[0] < 0 ? 1 : 2);
      const Face r = rotated(f, k);
      const int m1 = m[k], m2 = m[(k + 1) % 3];
      const int a = r[0], b = r[1], c = r[2];
      out.push_back({m1, b, m2});
      if ((w.pos_[a] - w.pos_[m2]).norm() <= (w.pos_[m1] - w.pos_[c]).norm()) {
        out.push_back({a, m1, m2});
        out.push_back({a, m2, c});
      } else {
        out.push_back({a, m1, c});
        out.push_back({m1, m2, c});
      }
    }
  }
  w.faces_ = std::move(out);
  w.rebuild_incidence();
}

bool try_collapse(WorkMesh& w, int a, int b) {
  const std::vector<int> ef = w.edge_faces(a, b);
  if (ef.empty() || ef.size() > 2) return false;
  const bool boundary_edge = ef.size() == 1;
  if (!boundary_edge && (w.boundary_vertex(a) || w.boundary_vertex(b))) return false;

  std::vector<int> opposite;
  for (int f : ef) opposite.push_back(w.third(f, a, b));
  std::sort(opposite.begin(), opposite.end());
  if (opposite.size() == 2 && opposite[0] == opposite[1]) return false;

  // Link condition: the only shared neighbours are the opposite corners.
  const auto na = w.neighbors(a), nb = w.neighbors(b);
  std::vector<int> common;
  std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
  if (common != opposite) return false;
  if (opposite.size() == 2 && w.has_face_with(a, opposite[0], opposite[1]) &&
      w.has_face_with(b, opposite[0], opposite[1])) {
    return false;
  }
  if (boundary_edge) {
    const int c = opposite[0];
    if (w.edge_faces(a, c).size() == 1 && w.edge_faces(b, c).size() == 1) return false;
  }

  const Vec3 p = 0.5 * (w.pos_[a] + w.pos_[b]);
  for (int v : {a, b}) {
    for (int f : w.vf_[v]) {
      if (std::find(ef.begin(), ef.end(), f) != ef.end()) continue;
      const Face& face = w.faces_[f];
      const Vec3 before = w.cross(face);
      std::array<Vec3, 3> q{w.pos_[face[0]], w.pos_[face[1]], w.pos_[face[2]]};
      for (int k = 0; k < 3; ++k) {
        if (face[k] == a || face[k] == b) q[k] = p;
      }
      const Vec3 after = (q[1] - q[0]).cross(q[2] - q[0]);
      if (0.5 * after.norm() < kDegenerateArea || after.dot(before) <= 0.0) return false;
    }
  }

  w.pos_[a] = p;
  w.vs_[a] = average(w.vs_[a], w.vs_[b]);
  for (int f : ef) {
    w.face_dead_[f] = 1;
    for (int v : w.faces_[f]) w.remove_incidence(v, f);
  }
  for (int f : w.vf_[b]) {
    for (int& v : w.faces_[f]) {
      if (v == b) v = a;
    }
    w.vf_[a].push_back(f);
  }
  std::sort(w.vf_[a].begin(), w.vf_[a].end());
  w.vf_[b].clear();
  w.vert_dead_[b] = 1;
  return true;
}

void collapse_edges(WorkMesh& w, double min_length, RemeshStats& stats) {
  struct Candidate {
    double length;
    Edge edge;
  };
  std::vector<Candidate> candidates;
  {
    TriangleMesh current{w.pos_, w.faces_};
    const MeshAdjacency adj(current);
    for (const Edge& e : adj.edges()) {
      if (w.vs_[e.a].region != Region::active || w.vs_[e.b].region != Region::active) continue;
      const double len = (w.pos_[e.a] - w.pos_[e.b]).norm();
      if (len < min_length) candidates.push_back({len, e});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    return x.length != y.length ? x.length < y.length : x.edge < y.edge;
  });
  std::vector<char> touched(w.pos_.size(), 0);
  for (const Candidate& c : candidates) {
    const int a = c.edge.a, b = c.edge.b;
    if (touched[a] || touched[b]) continue;
    if (try_collapse(w, a, b)) {
      touched[a] = touched[b] = 1;
      ++stats.collapses;
    }
  }
}

void flip_edges(WorkMesh& w, RemeshStats& stats) {
  std::vector<Edge> edges;
  for (std::size_t f = 0; f < w.faces_.size(); ++f) {
    if (w.face_dead_[f]) continue;
    const Face& face = w.faces_[f];
    for (int k = 0; k < 3; ++k) edges.emplace_back(face[k], face[(k + 1) % 3]);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  auto target = [&](int v) { return w.boundary_vertex(v) ? 4 : 6; };
  for (const Edge& e : edges) {
    const std::vector<int> ef = w.edge_faces(e.a, e.b);
    if (ef.size() != 2 || !w.editable(ef[0]) || !w.editable(ef[1])) continue;
    // f1 holds the directed edge a -> b, f2 holds b -> a.
    int f1 = ef[0], f2 = ef[1];
    const Face& first = w.faces_[f1];
    bool forward = false;
    for (int k = 0; k < 3; ++k) forward = forward || (first[k] == e.a && first[(k + 1) % 3] == e.b);
    if (!forward) std::swap(f1, f2);
    const int a = e.a, b = e.b;
    const int c = w.third(f1, a, b), d = w.third(f2, a, b);
    if (c == d || !w.edge_faces(c, d).empty()) continue;

    const int va = static_cast<int>(w.neighbors(a).size()), vb = static_cast<int>(w.neighbors(b).size());
    const int vc = static_cast<int>(w.neighbors(c).size()), vd = static_cast<int>(w.neighbors(d).size());
    if (va < 4 || vb < 4) continue;
    const int ta = target(a), tb = target(b), tc = target(c), td = target(d);
    auto sq = [](int x) { return x * x; };
    const int before = sq(va - ta) + sq(vb - tb) + sq(vc - tc) + sq(vd - td);
    const int after = sq(va - 1 - ta) + sq(vb - 1 - tb) + sq(vc + 1 - tc) + sq(vd + 1 - td);
    if (after >= before) continue;

    const Face g1{a, d, c}, g2{d, b, c};
    const Vec3 old_sum = w.cross(w.faces_[f1]) + w.cross(w.faces_[f2]);
    const Vec3 n1 = w.cross(g1), n2 = w.cross(g2);
    if (0.5 * n1.norm() < kDegenerateArea || 0.5 * n2.norm() < kDegenerateArea) continue;
    if (n1.dot(n2) <= 0.0 || n1.dot(old_sum) <= 0.0 || n2.dot(old_sum) <= 0.0) continue;

    w.faces_[f1] = g1;
    w.faces_[f2] = g2;
    w.remove_incidence(b, f1);
    w.vf_[d].push_back(f1);
    w.remove_incidence(a, f2);
    w.vf_[c].push_back(f2);
    ++stats.flips;
  }
}

}  // namespace

RemeshResult remesh_pass(const TriangleMesh& mesh, const OptimizerState& state, const RemeshParams& params) {
  params.validate();
  state.check_aligned(mesh.vertices.size());
  const ManifoldReport report = validate_manifold(mesh);
  if (!report.manifold()) throw DataError("remesh_pass requires a manifold mesh");

  RemeshResult result;
  WorkMesh w(mesh, state);
  if (params.split) split_edges(w, build_adjacency(mesh), params.split_factor * params.l_target, result.stats);
  if (params.collapse) collapse_edges(w, params.collapse_factor * params.l_target, result.stats);
  if (params.flip) flip_edges(w, result.stats);

  std::vector<int> remap(w.pos_.size(), -1);
  TriangleMesh& out = result.mesh;
  OptimizerState& s = result.state;
  s.t = state.t;
  for (std::size_t v = 0; v < w.pos_.size(); ++v) {
    if (w.vert_dead_[v]) continue;
    remap[v] = static_cast<int>(out.vertices.size());
    out.vertices.push_back(w.pos_[v]);
    const VertexState& vs = w.vs_[v];
    s.m1.push_back(vs.m1);
    s.m2.push_back(vs.m2);
    s.speed.push_back(vs.speed);
    s.x_init.push_back(vs.x_init);
    if (state.local()) s.region.push_back(vs.region);
  }
  for (std::size_t f = 0; f < w.faces_.size(); ++f) {
    if (w.face_dead_[f]) continue;
    const Face& face = w.faces_[f];
    out.faces.push_back({remap[face[0]], remap[face[1]], remap[face[2]]});
  }
  return result;
}

}  // namespace nbrush
