#include "doctest.h"

#include "nbrush/error.hpp"
#include "nbrush/fields.hpp"
#include "nbrush/scene.hpp"

#include <cmath>

using namespace nbrush;

namespace {

double max_radial_error(const TriangleMesh& m, double radius) {
  double worst = 0.0;
  for (const auto& p : m.vertices) worst = std::max(worst, std::abs(p.norm() - radius));
  return worst;
}

}  // namespace

TEST_CASE("occupancy uses the <= 0 convention") {
  const auto s = sdf::sphere(Vec3::Zero(), 0.4);
  CHECK(occupancy_at(s, Vec3(0, 0, 0)));
  CHECK_FALSE(occupancy_at(s, Vec3(1, 0, 0)));
  CHECK(occupancy_at(s, Vec3(0.4, 0, 0)));
}

TEST_CASE("sample_grid") {
  SUBCASE("constant field") {
    const auto g = sample_grid(sdf::constant(-1.0), 2);
    REQUIRE(g.values.size() == 8);
    for (double v : g.values) CHECK(v == -1.0);
  }
  SUBCASE("sphere at resolution 3") {
    const auto g = sample_grid(sdf::sphere(Vec3::Zero(), 0.4), 3);
    CHECK(g.at(1, 1, 1) == doctest::Approx(-0.4).epsilon(1e-15));
    CHECK(g.at(0, 0, 0) == doctest::Approx(std::sqrt(0.75) - 0.4).epsilon(1e-15));
    CHECK(g.at(2, 2, 2) == doctest::Approx(std::sqrt(0.75) - 0.4).epsilon(1e-15));
  }
  SUBCASE("resolution below 2 is rejected") {
    CHECK_THROWS_AS(sample_grid(sdf::constant(1.0), 1), DataError);
  }
  SUBCASE("non-cubic resolution has product sample count") {
    const auto g = sample_grid(sdf::constant(1.0), std::array<int, 3>{3, 4, 5}, GridBounds{});
    CHECK(g.values.size() == 60);
  }
}

TEST_CASE("marching cubes on an analytic sphere") {
  const double r = 0.4;
  const auto grid = sample_grid(sdf::sphere(Vec3::Zero(), r), 64);
  const auto mesh = marching_cubes(grid);
  const auto report = validate_manifold(mesh);
  CHECK(report.closed);
  CHECK(report.manifold());
  CHECK(report.euler_characteristic == 2);
  const double cell = grid.cell_size().x();
  CHECK(max_radial_error(mesh, r) < 2.0 * cell);

  // Faces point outward.
  int outward = 0;
  for (const auto& f : mesh.faces) {
    const Vec3 mid = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    outward += face_cross(mesh, f).dot(mid) > 0.0;
  }
  CHECK(outward == static_cast<int>(mesh.faces.size()));
}

TEST_CASE("marching cubes vertices lie on sign-changing lattice edges") {
  const auto field = sdf::displace(sdf::sphere(Vec3::Zero(), 0.35), 0.05, 6.0, 3);
  const auto grid = sample_grid(field, 24);
  const auto mesh = marching_cubes(grid);
  const double cell = grid.cell_size().x();
  for (const auto& p : mesh.vertices) {
    // Each vertex sits on a lattice edge: two of its coordinates are on nodes.
    int on_lattice = 0;
    for (int a = 0; a < 3; ++a) {
      const double s = (p[a] - grid.bounds.min[a]) / cell;
      on_lattice += std::abs(s - std::round(s)) < 1e-9;
    }
    CHECK(on_lattice >= 2);
  }
  CHECK(validate_manifold(mesh).closed);
}

TEST_CASE("marching cubes error decreases with resolution") {
  double previous = 1e9;
  for (int res : {16, 32, 64}) {
    const auto mesh = marching_cubes(sample_grid(sdf::sphere(Vec3::Zero(), 0.4), res));
    const double err = max_radial_error(mesh, 0.4);
    CHECK(err < previous);
    previous = err;
  }
}

TEST_CASE("marching cubes on a box") {
  const auto grid = sample_grid(sdf::box(Vec3::Zero(), Vec3::Constant(0.3)), 64);
  const auto mesh = marching_cubes(grid);
  CHECK(validate_manifold(mesh).closed);
  const auto box = bounding_box(mesh);
  const double tol = 2.0 * grid.cell_size().x();
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(box.min[a] + 0.3) < tol);
    CHECK(std::abs(box.max[a] - 0.3) < tol);
  }
}

TEST_CASE("marching cubes stays closed on assorted shapes") {
  const auto torus = sdf::torus(Vec3::Zero(), 0.3, 0.1);
  const auto blob = sdf::smooth_union(sdf::sphere(Vec3(-0.15, 0, 0), 0.2), sdf::sphere(Vec3(0.15, 0, 0), 0.2), 0.05);
  const auto carved = sdf::subtract(sdf::box(Vec3::Zero(), Vec3::Constant(0.3)), sdf::sphere(Vec3(0.3, 0.3, 0.3), 0.25));
  const auto noisy = sdf::displace(sdf::sphere(Vec3::Zero(), 0.3), 0.1, 9.0, 42);
  struct Case {
    ScalarField f;
    int chi;
  };
  for (const auto& [field, chi] : {Case{torus, 0}, Case{blob, 2}, Case{carved, 2}}) {
    const auto r = validate_manifold(marching_cubes(sample_grid(field, 40)));
    CHECK(r.closed);
    CHECK(r.manifold());
    CHECK(r.euler_characteristic == chi);
  }
  // Heavy noise may change topology but never opens the surface.
  for (int res : {17, 31, 45}) {
    const auto r = validate_manifold(marching_cubes(sample_grid(noisy, res)));
    CHECK(r.closed);
    CHECK(r.nonmanifold_edges == 0);
  }
}

TEST_CASE("marching cubes on uniform fields is empty") {
  CHECK(marching_cubes(sample_grid(sdf::constant(1.0), 8)).empty());
  CHECK(marching_cubes(sample_grid(sdf::constant(-1.0), 8)).empty());
}

TEST_CASE("value noise is deterministic and bounded") {
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(0.37 * i, -0.11 * i, 0.05 * i * i);
    const double a = value_noise(p, 9);
    CHECK(a == value_noise(p, 9));
    CHECK(std::abs(a) <= 1.0);
  }
  CHECK(value_noise(Vec3(0.3, 0.4, 0.5), 1) != value_noise(Vec3(0.3, 0.4, 0.5), 2));
}

TEST_CASE("normalize_to_unit_cube") {
  SUBCASE("scales the longest side to 1") {
    const auto box = make_box(Vec3(0, 0, 0), Vec3(4, 2, 2));
    const auto [m, xf] = normalize_to_unit_cube(box);
    CHECK(xf.scale == doctest::Approx(0.25));
    const auto bb = bounding_box(m);
    CHECK((bb.min - Vec3(-0.5, -0.25, -0.25)).norm() < 1e-12);
    CHECK((bb.max - Vec3(0.5, 0.25, 0.25)).norm() < 1e-12);
  }
  SUBCASE("idempotent") {
    const auto [once, xf1] = normalize_to_unit_cube(make_icosphere(2, 3.0));
    const auto [twice, xf2] = normalize_to_unit_cube(once);
    CHECK(std::abs(xf2.scale - 1.0) < 1e-12);
    CHECK(xf2.translation.norm() < 1e-12);
    for (std::size_t i = 0; i < once.vertices.size(); ++i) {
      CHECK((once.vertices[i] - twice.vertices[i]).norm() < 1e-12);
    }
  }
  SUBCASE("degenerate inputs") {
    TriangleMesh point;
    point.vertices = {Vec3(1, 2, 3)};
    CHECK_THROWS_AS(normalize_to_unit_cube(point), DataError);
    CHECK_THROWS_AS(normalize_to_unit_cube(TriangleMesh{}), DataError);
  }
}

TEST_CASE("sample_surface") {
  SUBCASE("single triangle") {
    TriangleMesh m;
    m.vertices = {Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(0, 1, 1.5)};
    m.faces = {{0, 1, 2}};
    const Vec3 n = face_cross(m, m.faces[0]).normalized();
    const auto s = sample_surface(m, 1000, 5);
    REQUIRE(s.points.size() == 1000);
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      CHECK(std::abs((s.points[i] - m.vertices[0]).dot(n)) < 1e-9);
      CHECK((s.normals[i] - n).norm() < 1e-12);
      // Inside: barycentric coordinates in [0, 1].
      const Vec3 p = s.points[i];
      const Vec3 e1 = m.vertices[1] - m.vertices[0], e2 = m.vertices[2] - m.vertices[0];
      const double a = face_cross(m, m.faces[0]).norm();
      const double u = (p - m.vertices[0]).cross(e2).norm() / a;
      const double v = e1.cross(p - m.vertices[0]).norm() / a;
      CHECK(u + v <= 1.0 + 1e-9);
    }
  }
  SUBCASE("area-proportional split") {
    // Areas 1 and 3. Binomial sd at p = 0.25, n = 1e5 is 0.00137; 5 sd < 0.015.
    TriangleMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 0), Vec3(10, 0, 0), Vec3(13, 0, 0), Vec3(10, 2, 0)};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    const std::size_t n = 100000;
    const auto s = sample_surface(m, n, 77);
    std::size_t first = 0;
    for (int f : s.faces) first += f == 0;
    CHECK(std::abs(double(first) / n - 0.25) < 0.015);
  }
  SUBCASE("zero samples and zero area") {
    CHECK(sample_surface(make_tetrahedron(), 0, 1).points.empty());
    TriangleMesh flat;
    flat.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
    flat.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(sample_surface(flat, 10, 1), DataError);
  }
  SUBCASE("deterministic per seed") {
    const auto m = make_icosphere(2);
    CHECK(sample_surface(m, 500, 3).points == sample_surface(m, 500, 3).points);
  }
}

TEST_CASE("scene parsing") {
  const auto doc = nlohmann::json::parse(R"({
    "bounds": {"min": [-1, -1, -1], "max": [1, 1, 1]},
    "resolution": 32,
    "field": {"type": "subtract",
              "a": {"type": "union", "children": [{"type": "sphere", "radius": 0.5},
                                                   {"type": "box", "center": [0.5, 0, 0], "half_extent": [0.2, 0.2, 0.2]}]},
              "b": {"type": "capsule", "a": [0, -1, 0], "b": [0, 1, 0], "radius": 0.1}}
  })");
  const Scene scene = parse_scene(doc);
  CHECK(scene.resolution == 32);
  CHECK(scene.bounds.min == Vec3::Constant(-1));
  CHECK_FALSE(occupancy_at(scene.field, Vec3(0, 0, 0)));  // drilled out
  CHECK(occupancy_at(scene.field, Vec3(0.3, 0, 0)));
  CHECK(occupancy_at(scene.field, Vec3(0.65, 0.1, 0)));

  CHECK_THROWS_AS(parse_scene(nlohmann::json::parse(R"({"field": {"type": "blob"}})")), DataError);
  CHECK_THROWS_AS(parse_scene(nlohmann::json::parse(R"({"field": {"type": "sphere"}})")), DataError);
  CHECK_THROWS_AS(parse_scene(nlohmann::json::parse(R"({"nofield": 1})")), DataError);
}
