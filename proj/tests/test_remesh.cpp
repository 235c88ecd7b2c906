#include "doctest.h"

#include "nbrush/error.hpp"
#include "nbrush/remesh.hpp"

#include <cmath>
#include <map>
#include <random>

using namespace nbrush;

namespace {

// Triangulated grid in the z = 0 plane, (n+1) x (n+1) vertices, each cell cut
// along the same diagonal. Interior vertices have valence 6.
TriangleMesh grid_patch(int n) {
  TriangleMesh m;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) m.vertices.emplace_back(i + 0.5 * j, j * std::sqrt(3.0) / 2, 0.0);
  }
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      m.faces.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
      m.faces.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return m;
}

int valence(const TriangleMesh& m, int v) { return static_cast<int>(build_adjacency(m).neighbors(v).size()); }

}  // namespace

TEST_CASE("laplacian_apply") {
  SUBCASE("constant field") {
    const auto mesh = make_icosphere(2);
    const auto out = laplacian_apply(build_adjacency(mesh), std::vector<Vec3>(mesh.vertices.size(), Vec3(1, -2, 3)));
    for (const auto& v : out) CHECK(v.norm() < 1e-15);
  }
  SUBCASE("regular tetrahedron") {
    const auto mesh = make_tetrahedron();
    const auto out = laplacian_apply(build_adjacency(mesh), mesh.vertices);
    for (std::size_t i = 0; i < 4; ++i) CHECK((out[i] + 4.0 / 3.0 * mesh.vertices[i]).norm() < 1e-15);
  }
  SUBCASE("isolated vertex") {
    TriangleMesh m;
    m.vertices = {Vec3(1, 2, 3)};
    const auto out = laplacian_apply(build_adjacency(m), m.vertices);
    CHECK(out[0] == Vec3::Zero());
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(laplacian_apply(build_adjacency(make_tetrahedron()), std::vector<Vec3>(3)), DataError);
  }
}

TEST_CASE("adam_step") {
  TriangleMesh m;
  m.vertices = {Vec3::Zero()};
  SUBCASE("zero gradient from a fresh state") {
    auto s = OptimizerState::fresh(m);
    const auto step = adam_step(s, {Vec3::Zero()}, {});
    CHECK(step[0] == Vec3::Zero());
    CHECK(s.speed[0] == 0.0);
  }
  SUBCASE("constant gradient drives v to 1") {
    auto s = OptimizerState::fresh(m);
    for (int i = 0; i < 200; ++i) adam_step(s, {Vec3(0.3, -0.1, 0.2)}, {});
    CHECK(s.speed[0] > 0.999);
  }
  SUBCASE("alternating gradient drives v toward 0") {
    // Independent iteration of the moment recurrences.
    const Vec3 g(0.5, 0.0, -0.5);
    double m1 = 0.0, m2 = 0.0;
    auto s = OptimizerState::fresh(m);
    double expected = 0.0;
    for (int t = 1; t <= 400; ++t) {
      const double sign = t % 2 ? 1.0 : -1.0;
      m1 = 0.9 * m1 + 0.1 * sign;
      m2 = 0.999 * m2 + 0.001 * g.squaredNorm();
      const double m1_hat = std::abs(m1) * g.norm() / (1 - std::pow(0.9, t));
      expected = std::min(1.0, m1_hat / (std::sqrt(m2 / (1 - std::pow(0.999, t))) + 1e-8));
      adam_step(s, {sign * g}, {});
    }
    CHECK(s.speed[0] == doctest::Approx(expected).epsilon(1e-9));
    CHECK(s.speed[0] < 0.06);
  }
  SUBCASE("non-finite gradient names the vertex") {
    m.vertices.push_back(Vec3::Ones());
    auto s = OptimizerState::fresh(m);
    try {
      adam_step(s, {Vec3::Zero(), Vec3(0, NAN, 0)}, {});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("vertex 1") != std::string::npos);
    }
    CHECK(s.t == 0);
  }
}

TEST_CASE("relative_laplacian_update") {
  const auto mesh = make_icosphere(1);
  const auto adj = build_adjacency(mesh);
  const std::size_t n = mesh.vertices.size();
  std::vector<double> v(n, 0.8);
  SUBCASE("zero displacement") {
    const auto out = relative_laplacian_update(mesh.vertices, mesh.vertices, 0.3, v, adj);
    CHECK(out == mesh.vertices);
  }
  SUBCASE("uniform displacement is a fixed point") {
    std::vector<Vec3> x = mesh.vertices;
    for (auto& p : x) p += Vec3(0.1, 0.2, -0.3);
    const auto out = relative_laplacian_update(x, mesh.vertices, 0.7, v, adj);
    for (std::size_t i = 0; i < n; ++i) CHECK((out[i] - x[i]).norm() < 1e-15);
  }
  SUBCASE("lambda zero or v zero leaves x untouched") {
    std::mt19937 rng(1);
    std::normal_distribution<double> d(0.0, 0.1);
    std::vector<Vec3> x = mesh.vertices;
    for (auto& p : x) p += Vec3(d(rng), d(rng), d(rng));
    CHECK(relative_laplacian_update(x, mesh.vertices, 0.0, v, adj) == x);
    CHECK(relative_laplacian_update(x, mesh.vertices, 0.5, std::vector<double>(n, 0.0), adj) == x);
    std::vector<double> some = v;
    some[3] = 0.0;
    CHECK(relative_laplacian_update(x, mesh.vertices, 0.5, some, adj)[3] == x[3]);
  }
  SUBCASE("lambda out of range") {
    CHECK_THROWS_AS(relative_laplacian_update(mesh.vertices, mesh.vertices, 1.5, v, adj), DataError);
  }
}

TEST_CASE("remesh_pass examples") {
  SUBCASE("tetrahedron survives a huge target length") {
    const auto tet = make_tetrahedron();
    RemeshParams p;
    p.l_target = 100.0;
    const auto r = remesh_pass(tet, OptimizerState::fresh(tet), p);
    CHECK(r.mesh.vertices == tet.vertices);
    CHECK(r.mesh.faces == tet.faces);
  }
  SUBCASE("icosphere with half the mean edge length") {
    const auto sphere = make_icosphere(2);
    RemeshParams p;
    p.l_target = 0.5 * mean_edge_length(sphere);
    const auto r = remesh_pass(sphere, OptimizerState::fresh(sphere), p);
    CHECK(r.stats.splits == static_cast<int>(build_adjacency(sphere).edges().size()));
    CHECK(r.mesh.vertices.size() > sphere.vertices.size());
    const auto report = validate_manifold(r.mesh);
    CHECK(report.closed);
    CHECK(report.euler_characteristic == 2);
    r.state.check_aligned(r.mesh.vertices.size());
  }
  SUBCASE("flip restores regular valence in a planar patch") {
    TriangleMesh m = grid_patch(6);
    // Flip the interior edge between cells (2,2) and (3,2): vertices a, b lose
    // one neighbour and c, d gain one, giving valences 5, 5, 7, 7.
    const int n = 6;
    auto id = [n](int i, int j) { return j * (n + 1) + i; };
    const int a = id(3, 2), b = id(2, 3);  // shared diagonal of the cell (2, 2)
    const int c = id(2, 2), d = id(3, 3);
    bool flipped = false;
    for (auto& f : m.faces) {
      if (f == Face{c, a, b}) f = Face{c, a, d}, flipped = true;
      else if (f == Face{a, d, b}) f = Face{c, d, b};
    }
    REQUIRE(flipped);
    REQUIRE(validate_manifold(m).manifold());
    CHECK(valence(m, a) == 5);
    CHECK(valence(m, b) == 5);
    CHECK(valence(m, c) == 7);
    CHECK(valence(m, d) == 7);
    RemeshParams p;
    p.split = p.collapse = false;
    const auto r = remesh_pass(m, OptimizerState::fresh(m), p);
    CHECK(r.stats.flips >= 1);
    for (int v : {a, b, c, d}) CHECK(valence(r.mesh, v) == 6);
  }
  SUBCASE("non-manifold input is rejected") {
    TriangleMesh m = make_tetrahedron();
    m.vertices.push_back(Vec3(3, 3, 3));
    m.faces.push_back({0, 1, 4});
    CHECK_THROWS_AS(remesh_pass(m, OptimizerState::fresh(m), RemeshParams{}), DataError);
  }
  SUBCASE("misaligned state is rejected") {
    const auto tet = make_tetrahedron();
    auto s = OptimizerState::fresh(tet);
    s.m2.pop_back();
    CHECK_THROWS_AS(remesh_pass(tet, s, RemeshParams{}), DataError);
  }
}

TEST_CASE("remesh_pass is the identity at a fixed point") {
  for (int level : {1, 2, 3}) {
    const auto sphere = make_icosphere(level, 0.4);
    RemeshParams p;
    p.l_target = mean_edge_length(sphere);
    auto s = OptimizerState::fresh(sphere);
    s.t = 7;
    const auto r = remesh_pass(sphere, s, p);
    CHECK_FALSE(r.stats.changed());
    CHECK(r.mesh.vertices == sphere.vertices);
    CHECK(r.mesh.faces == sphere.faces);
    CHECK(r.state.x_init == s.x_init);
    CHECK(r.state.t == 7);
  }
}

TEST_CASE("new vertices average the endpoint state") {
  const auto tet = make_tetrahedron();
  auto s = OptimizerState::fresh(tet);
  for (int i = 0; i < 4; ++i) {
    s.m1[i] = Vec3::Constant(i);
    s.m2[i] = i * i;
    s.speed[i] = 0.25 * i;
  }
  RemeshParams p;
  p.l_target = 0.5 * mean_edge_length(tet);
  p.collapse = p.flip = false;
  const auto r = remesh_pass(tet, s, p);
  REQUIRE(r.mesh.vertices.size() == 10);
  const auto edges = build_adjacency(tet).edges();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const int v = 4 + static_cast<int>(k);
    const Edge& e = edges[k];
    CHECK((r.mesh.vertices[v] - 0.5 * (tet.vertices[e.a] + tet.vertices[e.b])).norm() < 1e-15);
    CHECK(r.state.m2[v] == 0.5 * (s.m2[e.a] + s.m2[e.b]));
    CHECK(r.state.speed[v] == 0.5 * (s.speed[e.a] + s.speed[e.b]));
  }
}

TEST_CASE("local mode leaves inactive vertices alone") {
  const auto sphere = make_icosphere(3, 0.4);
  auto s = OptimizerState::fresh(sphere);
  s.region.assign(sphere.vertices.size(), Region::inactive);
  for (std::size_t v = 0; v < sphere.vertices.size(); ++v) {
    if (sphere.vertices[v].x() > 0.1) s.region[v] = Region::active;
    else if (sphere.vertices[v].x() > 0.0) s.region[v] = Region::band;
  }
  RemeshParams p;
  p.l_target = 2.0 * mean_edge_length(sphere);  // aggressive collapsing
  const auto r = remesh_pass(sphere, s, p);
  CHECK(r.stats.collapses > 0);
  std::map<std::array<double, 3>, int> out_positions;
  for (const auto& q : r.mesh.vertices) out_positions[{q.x(), q.y(), q.z()}]++;
  for (std::size_t v = 0; v < sphere.vertices.size(); ++v) {
    if (s.region[v] == Region::active) continue;
    const auto& q = sphere.vertices[v];
    CHECK(out_positions.count({q.x(), q.y(), q.z()}) == 1);
  }
  CHECK(validate_manifold(r.mesh).closed);
  CHECK(r.state.region.size() == r.mesh.vertices.size());
}

TEST_CASE("randomized remesh passes keep invariants") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int passes = 0, failures = 0;
  RemeshStats total;
  for (int run = 0; run < 100; ++run) {
    TriangleMesh mesh = make_icosphere(1 + run % 2, 0.3 + 0.4 * unit(rng));
    auto state = OptimizerState::fresh(mesh);
    for (int k = 0; k < 10; ++k) {
      const double jitter = 0.15 * unit(rng) * mean_edge_length(mesh);
      for (auto& p : mesh.vertices) p += jitter * Vec3(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
      for (std::size_t v = 0; v < state.size(); ++v) state.m2[v] = unit(rng);
      RemeshParams params;
      params.l_target = mean_edge_length(mesh) * (0.45 + 1.6 * unit(rng));
      auto r = remesh_pass(mesh, state, params);
      ++passes;
      total.splits += r.stats.splits;
      total.collapses += r.stats.collapses;
      total.flips += r.stats.flips;
      const auto report = validate_manifold(r.mesh);
      bool ok = report.closed && report.manifold() && report.euler_characteristic == 2;
      ok = ok && r.state.size() == r.mesh.vertices.size() && r.state.m1.size() == r.state.size() &&
           r.state.m2.size() == r.state.size() && r.state.speed.size() == r.state.size();
      for (const auto& p : r.mesh.vertices) ok = ok && p.allFinite();
      for (double m2 : r.state.m2) ok = ok && std::isfinite(m2) && m2 >= 0.0;
      failures += !ok;
      mesh = std::move(r.mesh);
      state = std::move(r.state);
    }
  }
  CHECK(passes == 1000);
  CHECK(total.splits > 0);
  CHECK(total.collapses > 0);
  CHECK(total.flips > 0);
  MESSAGE("splits " << total.splits << ", collapses " << total.collapses << ", flips " << total.flips);
  CHECK(failures == 0);
}
