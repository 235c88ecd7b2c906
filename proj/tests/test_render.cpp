#include "doctest.h"

#include "nbrush/camera.hpp"
#include "nbrush/error.hpp"
#include "nbrush/normal_map.hpp"
#include "nbrush/render.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace nbrush;
using namespace nbrush::testing;

namespace {

TriangleMesh facing_quad(double half) {
  TriangleMesh m;
  m.vertices = {Vec3(-half, -half, 0), Vec3(half, -half, 0), Vec3(half, half, 0), Vec3(-half, half, 0)};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST_CASE("camera_from_orbit conventions") {
  CHECK((camera_from_orbit(0, 0, 2).position() - Vec3(0, 0, 2)).norm() < 1e-15);
  CHECK((camera_from_orbit(90, 0, 2).position() - Vec3(2, 0, 0)).norm() < 1e-12);
  CHECK_THROWS_AS(camera_from_orbit(0, 90, 2), DataError);
  CHECK_THROWS_AS(camera_from_orbit(0, -90, 2), DataError);
  const Camera c = camera_from_orbit(0, 0, 2);
  CHECK((c.forward() - Vec3(0, 0, -1)).norm() < 1e-15);
  CHECK((c.rotate(Vec3(0, 0, 1)) - Vec3(0, 0, 1)).norm() < 1e-15);
}

TEST_CASE("orthogonal_view_set") {
  const auto views = orthogonal_view_set(2.0);
  const Vec3 expected[] = {Vec3(0, 0, 2), Vec3(2, 0, 0), Vec3(0, 0, -2), Vec3(-2, 0, 0)};
  for (int i = 0; i < 4; ++i) CHECK((views[i].position() - expected[i]).norm() < 1e-12);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double d = views[i].forward().dot(views[j].forward());
      CHECK(std::abs(d - std::round(d)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(orthogonal_view_set(0.0), DataError);
}

TEST_CASE("camera validation") {
  CHECK_THROWS_AS(Camera(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3::UnitY(), Orthographic{}, 64, 64), DataError);
  CHECK_THROWS_AS(Camera(Vec3(0, 2, 0), Vec3::Zero(), Vec3::UnitY(), Orthographic{}, 64, 64), DataError);
  CHECK_THROWS_AS(Camera(Vec3(0, 0, 2), Vec3::Zero(), Vec3::UnitY(), Orthographic{}, 4, 64), DataError);
}

TEST_CASE("projection Jacobians match finite differences") {
  const Camera cams[] = {camera_from_orbit(30, 20, 2, Perspective{}, 64, 48),
                         camera_from_orbit(-70, -10, 2, Orthographic{}, 64, 48)};
  const Vec3 p(0.1, -0.2, 0.3);
  for (const Camera& cam : cams) {
    const auto pr = cam.project(p);
    for (int a = 0; a < 3; ++a) {
      Vec3 e = Vec3::Zero();
      e[a] = 1e-6;
      const auto hi = cam.project(p + e), lo = cam.project(p - e);
      CHECK(std::abs((hi.sx - lo.sx) / 2e-6 - pr.dsx[a]) < 1e-5);
      CHECK(std::abs((hi.sy - lo.sy) / 2e-6 - pr.dsy[a]) < 1e-5);
      CHECK(std::abs((hi.depth - lo.depth) / 2e-6 - pr.ddepth[a]) < 1e-8);
    }
  }
}

TEST_CASE("render_normals basics") {
  SUBCASE("camera-facing quad") {
    const NormalMap map = render_normals(facing_quad(2.0), camera_from_orbit(0, 0, 2, Orthographic{}, 64, 64));
    CHECK(map.covered_count() == 64 * 64);
    for (std::size_t i = 0; i < map.pixel_count(); ++i) CHECK((map.normals[i] - Vec3(0, 0, 1)).norm() < 1e-6);
  }
  SUBCASE("quad seen from behind is culled") {
    const NormalMap map = render_normals(facing_quad(2.0), camera_from_orbit(180, 0, 2, Orthographic{}, 32, 32));
    CHECK(map.covered_count() == 0);
  }
  SUBCASE("empty mesh") {
    const NormalMap map = render_normals(TriangleMesh{}, camera_from_orbit(0, 0, 2, Orthographic{}, 16, 16));
    CHECK(map.covered_count() == 0);
    for (const auto& n : map.normals) CHECK(n == Vec3::Zero());
  }
  SUBCASE("icosphere centre pixel faces the camera") {
    const auto sphere = make_icosphere(3, 0.4);
    for (double az : {0.0, 37.0, 145.0}) {
      for (double el : {-40.0, 0.0, 25.0}) {
        for (Projection proj : {Projection(Orthographic{}), Projection(Perspective{})}) {
          const Camera cam = camera_from_orbit(az, el, 2, proj, 65, 65);
          const NormalMap map = render_normals(sphere, cam);
          const std::size_t centre = map.index(32, 32);
          REQUIRE(map.covered(centre));
          CHECK((map.normals[centre] - Vec3(0, 0, 1)).norm() < 2e-2);
        }
      }
    }
  }
  SUBCASE("covered normals are unit, uncovered are zero") {
    const NormalMap map = render_normals(make_icosphere(2, 0.45), camera_from_orbit(20, 10, 2, Perspective{}, 48, 48));
    for (std::size_t i = 0; i < map.pixel_count(); ++i) {
      if (map.covered(i)) CHECK(std::abs(map.normals[i].norm() - 1.0) < 1e-6);
      else CHECK(map.normals[i] == Vec3::Zero());
    }
  }
  SUBCASE("repeat renders are bit-identical") {
    const auto mesh = jittered(make_icosphere(2, 0.4), 0.02, 5);
    const Camera cam = camera_from_orbit(33, 12, 2, Perspective{}, 64, 64);
    CHECK(render_normals(mesh, cam) == render_normals(mesh, cam));
  }
}

TEST_CASE("nearer surface wins the depth test") {
  TriangleMesh m = facing_quad(0.3);
  TriangleMesh back = facing_quad(0.5);
  for (auto& p : back.vertices) p.z() = -0.2;
  const int offset = 4;
  for (const auto& p : back.vertices) m.vertices.push_back(p);
  for (auto f : back.faces) m.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  NormalRenderer renderer(m);
  const Camera cam = camera_from_orbit(0, 0, 2, Orthographic{}, 32, 32);
  const Frame frame = renderer.render(cam);
  const std::size_t centre = frame.map.index(16, 16);
  CHECK(frame.raster.face[centre] < 2);
  CHECK(std::abs(frame.raster.depth[centre] - 2.0) < 1e-12);
  CHECK(frame.raster.face[frame.map.index(6, 6)] >= 2);
}

TEST_CASE("shared edges through pixel centres are covered exactly once") {
  // Vertices on pixel centres so the shared diagonal passes through a row of
  // centres and the outer edges run along centre lines.
  const Camera cam = camera_from_orbit(0, 0, 2, Orthographic{0.5}, 16, 16);
  // 16 px over 1 unit: pixel centre x + 0.5 maps to world (x + 0.5) / 16 - 0.5.
  auto world = [](double px) { return (px + 0.5) / 16.0 - 0.5; };
  TriangleMesh m;
  m.vertices = {Vec3(world(2), world(2), 0), Vec3(world(12), world(2), 0), Vec3(world(12), world(12), 0),
                Vec3(world(2), world(12), 0)};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  TriangleMesh a = m, b = m;
  a.faces = {m.faces[0]};
  b.faces = {m.faces[1]};
  const NormalMap both = render_normals(m, cam);
  const NormalMap only_a = render_normals(a, cam);
  const NormalMap only_b = render_normals(b, cam);
  for (std::size_t i = 0; i < both.pixel_count(); ++i) {
    CHECK_FALSE((only_a.covered(i) && only_b.covered(i)));
    CHECK(both.covered(i) == (only_a.covered(i) || only_b.covered(i)));
  }
  // The square spans centres 2..12 in both axes: top and left edges are in,
  // bottom and right edges are out, giving 10 x 10 pixels.
  CHECK(both.covered_count() == 100);
}

TEST_CASE("coverage matches a reference point-in-triangle test") {
  const auto mesh = jittered(make_icosphere(2, 0.42), 0.01, 9);
  for (Projection proj : {Projection(Orthographic{}), Projection(Perspective{})}) {
    const Camera cam = camera_from_orbit(21, 17, 2, proj, 96, 96);
    const NormalMap map = render_normals(mesh, cam);
    int mismatches = 0;
    for (int y = 0; y < 96; ++y) {
      for (int x = 0; x < 96; ++x) {
        const auto q = cam.pixel_center(x, y);
        bool inside_any = false;
        for (const Face& f : mesh.faces) {
          Eigen::Vector2d s[3];
          for (int k = 0; k < 3; ++k) {
            const auto p = cam.project(mesh.vertices[f[k]]);
            s[k] = {p.sx, p.sy};
          }
          Eigen::Matrix2d T;
          T << s[1] - s[0], s[2] - s[0];
          if (T.determinant() <= 0) continue;
          const Eigen::Vector2d uv = T.inverse() * (q - s[0]);
          if (uv.x() >= 0 && uv.y() >= 0 && uv.sum() <= 1) {
            inside_any = true;
            break;
          }
        }
        mismatches += inside_any != map.covered(map.index(x, y));
      }
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("backward_normals") {
  const auto mesh = make_icosphere(1, 0.45);
  REQUIRE(mesh.vertices.size() == 42);
  const Camera cam = camera_from_orbit(25, 15, 2, Orthographic{}, 32, 32);
  const std::size_t n = 32 * 32;

  SUBCASE("zero pixel gradient") {
    for (const auto& g : backward_normals(mesh, cam, std::vector<Vec3>(n, Vec3::Zero()))) CHECK(g == Vec3::Zero());
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(backward_normals(mesh, cam, std::vector<Vec3>(n - 1, Vec3::Zero())), DataError);
  }
  SUBCASE("linear in the pixel gradient") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d;
    std::vector<Vec3> g1(n), g2(n), sum(n);
    for (std::size_t i = 0; i < n; ++i) {
      g1[i] = Vec3(d(rng), d(rng), d(rng));
      g2[i] = Vec3(d(rng), d(rng), d(rng));
      sum[i] = g1[i] + g2[i];
    }
    const auto a = backward_normals(mesh, cam, g1);
    const auto b = backward_normals(mesh, cam, g2);
    const auto c = backward_normals(mesh, cam, sum);
    for (std::size_t v = 0; v < a.size(); ++v) CHECK((a[v] + b[v] - c[v]).norm() < 1e-10 * (1 + c[v].norm()));
  }
  SUBCASE("flat facing quad has no in-plane gradient") {
    const auto quad = facing_quad(0.3);
    const Camera front = camera_from_orbit(0, 0, 2, Orthographic{}, 32, 32);
    const NormalMap map = render_normals(quad, front);
    std::vector<Vec3> g(n, Vec3::Zero());
    for (std::size_t i = 0; i < n; ++i) {
      if (map.covered(i)) g[i] = Vec3(0.3, -0.2, 0.7);
    }
    for (const auto& gv : backward_normals(quad, front, g)) {
      CHECK(std::abs(gv.x()) < 1e-12);
      CHECK(std::abs(gv.y()) < 1e-12);
    }
  }
}

TEST_CASE("backward_normals agrees with central finite differences") {
  const auto mesh = make_icosphere(1, 0.45);
  const auto target_mesh = jittered(make_icosphere(2, 0.45), 0.03, 17);
  for (Projection proj : {Projection(Orthographic{}), Projection(Perspective{})}) {
    const Camera cam = camera_from_orbit(25, 15, 2, proj, 32, 32);
    const NormalMap target = render_normals(target_mesh, cam);
    const NormalMap base = render_normals(mesh, cam);
    const PixelMask mask = kink_free_mask(base, target, [](int x, int y) { return x + y < 40; });
    const FdResult r = finite_difference_check(mesh, cam, target, mask);
    MESSAGE("checked " << r.checked << ", agreeing " << r.agreeing);
    REQUIRE(r.checked > 30);
    CHECK(r.agreeing >= 0.95 * r.checked);
  }
}

TEST_CASE("normal PNG round trip") {
  const NormalMap map = render_normals(make_icosphere(2, 0.4), camera_from_orbit(10, 5, 2, Orthographic{}, 40, 30));
  const NormalMap quantized = quantize_normals(map);
  const std::string png = encode_normal_png(map);
  CHECK(decode_normal_png(png) == quantized);
  CHECK(encode_normal_png(decode_normal_png(png)) == png);
  for (std::size_t i = 0; i < map.pixel_count(); ++i) {
    if (map.covered(i)) CHECK((quantized.normals[i] - map.normals[i]).cwiseAbs().maxCoeff() <= 1.0 / 65535 + 1e-12);
  }
  CHECK_THROWS_AS(decode_normal_png("not a png"), DataError);
  CHECK_THROWS_AS(decode_normal_png(png.substr(0, png.size() / 2)), DataError);
  PixelMask mask(7, 5);
  mask.values[3] = mask.values[20] = 1;
  const std::string mask_png = encode_mask_png(mask);
  CHECK(decode_mask_png(mask_png) == mask);
  CHECK_THROWS_AS(decode_normal_png(mask_png), DataError);
}
