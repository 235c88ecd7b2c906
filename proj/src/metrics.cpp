#include "nbrush/metrics.hpp"

#include "nbrush/error.hpp"

#include <boost/container_hash/hash.hpp>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace nbrush {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

using Point = bg::model::point<double, 3, bg::cs::cartesian>;

Point to_point(const Vec3& v) { return Point(v.x(), v.y(), v.z()); }

// Mean distance from each point of `from` to its nearest neighbour in `to`.
// Points are visited in order, so the sum is reproducible.
double mean_nearest(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  std::vector<Point> pts;
  pts.reserve(to.size());
  for (const Vec3& p : to) pts.push_back(to_point(p));
  const bgi::rtree<Point, bgi::rstar<16>> tree(pts.begin(), pts.end());
  double sum = 0.0;
  std::vector<Point> hit;
  for (const Vec3& p : from) {
    hit.clear();
    tree.query(bgi::nearest(to_point(p), 1), std::back_inserter(hit));
    const Vec3 q(bg::get<0>(hit[0]), bg::get<1>(hit[0]), bg::get<2>(hit[0]));
    sum += (p - q).norm();
  }
  return sum / static_cast<double>(from.size());
}

std::vector<Vec3> samples_of(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed, const char* name) {
  try {
    return sample_surface(mesh, n, sample_seed(mesh, seed)).points;
  } catch (const DataError& e) {
    throw DataError(std::string("mesh ") + name + ": " + e.what());
  }
}

}  // namespace

std::uint64_t sample_seed(const TriangleMesh& mesh, std::uint64_t seed) {
  std::size_t h = 0;
  boost::hash_combine(h, mesh.vertices.size());
  boost::hash_combine(h, mesh.faces.size());
  for (const Vec3& p : mesh.vertices) {
    for (int a = 0; a < 3; ++a) {
      std::uint64_t bits;
      std::memcpy(&bits, &p[a], sizeof bits);
      boost::hash_combine(h, bits);
    }
  }
  for (const Face& f : mesh.faces) {
    for (int v : f) boost::hash_combine(h, v);
  }
  boost::hash_combine(h, seed);
  return h;
}

double chamfer_distance(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw DataError("chamfer distance needs at least one sample");
  const auto sa = samples_of(a, n_samples, seed, "a");
  const auto sb = samples_of(b, n_samples, seed, "b");
  return 0.5 * (mean_nearest(sa, sb) + mean_nearest(sb, sa));
}

double masked_chamfer(const TriangleMesh& a, const TriangleMesh& b, const RegionPredicate& region,
                      std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw DataError("chamfer distance needs at least one sample");
  auto keep = [&](std::vector<Vec3> pts, const char* name) {
    std::erase_if(pts, [&](const Vec3& p) { return !region(p); });
    const std::size_t needed = std::max<std::size_t>(1, (n_samples + 99) / 100);
    if (pts.size() < needed) {
      throw DataError(std::string("region keeps ") + std::to_string(pts.size()) + " of " +
                      std::to_string(n_samples) + " samples on mesh " + name);
    }
    return pts;
  };
  const auto sa = keep(samples_of(a, n_samples, seed, "a"), "a");
  const auto sb = keep(samples_of(b, n_samples, seed, "b"), "b");
  return 0.5 * (mean_nearest(sa, sb) + mean_nearest(sb, sa));
}

double masked_chamfer(const TriangleMesh& a, const TriangleMesh& b, const ScalarField& region,
                      std::size_t n_samples, std::uint64_t seed) {
  return masked_chamfer(a, b, [&](const Vec3& p) { return region(p) <= 0.0; }, n_samples, seed);
}

std::vector<std::uint8_t> voxelize(const TriangleMesh& mesh, const Vec3& min, const Vec3& max, int res) {
  if (res < 1) throw DataError("grid resolution must be positive");
  const Vec3 cell = (max - min) / res;
  // Tiny irrational offsets keep rays off vertices and edges in the common
  // axis-aligned cases; exact hits are settled by the edge rule below.
  const double jy = 1e-6 * cell.y() * 0.7548776662466927;
  const double jz = 1e-6 * cell.z() * 0.5698402909980532;
  auto ray_y = [&](int j) { return min.y() + (j + 0.5) * cell.y() + jy; };
  auto ray_z = [&](int k) { return min.z() + (k + 0.5) * cell.z() + jz; };

  // Crossing x positions for every (j, k) ray.
  std::vector<std::vector<double>> crossings(static_cast<std::size_t>(res) * res);
  using Vec2 = Eigen::Vector2d;
  for (const Face& f : mesh.faces) {
    std::array<Vec2, 3> s;
    for (int k = 0; k < 3; ++k) s[k] = Vec2(mesh.vertices[f[k]].y(), mesh.vertices[f[k]].z());
    const double lo_y = std::min({s[0].x(), s[1].x(), s[2].x()}), hi_y = std::max({s[0].x(), s[1].x(), s[2].x()});
    const double lo_z = std::min({s[0].y(), s[1].y(), s[2].y()}), hi_z = std::max({s[0].y(), s[1].y(), s[2].y()});
    const int j0 = std::max(0, static_cast<int>(std::floor((lo_y - min.y()) / cell.y() - 0.5)) - 1);
    const int j1 = std::min(res - 1, static_cast<int>(std::ceil((hi_y - min.y()) / cell.y() - 0.5)) + 1);
    const int k0 = std::max(0, static_cast<int>(std::floor((lo_z - min.z()) / cell.z() - 0.5)) - 1);
    const int k1 = std::min(res - 1, static_cast<int>(std::ceil((hi_z - min.z()) / cell.z() - 0.5)) + 1);
    for (int k = k0; k <= k1; ++k) {
      for (int j = j0; j <= j1; ++j) {
        const Vec2 q(ray_y(j), ray_z(k));
        // Edge functions with the lower vertex index as origin, as in the
        // rasterizer, so a ray through a shared edge hits exactly one side.
        std::array<double, 3> e;
        for (int m = 0; m < 3; ++m) {
          const int ia = (m + 1) % 3, ib = (m + 2) % 3;
          auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
          e[m] = f[ia] < f[ib] ? cross(s[ib] - s[ia], q - s[ia]) : -cross(s[ia] - s[ib], q - s[ib]);
        }
        const double area = e[0] + e[1] + e[2];
        if (area == 0.0) continue;
        const double sign = area > 0.0 ? 1.0 : -1.0;
        bool inside = true;
        for (int m = 0; m < 3 && inside; ++m) {
          const double em = sign * e[m];
          if (em > 0.0) continue;
          if (em < 0.0) {
            inside = false;
            continue;
          }
          const Vec2 d = sign * (s[(m + 2) % 3] - s[(m + 1) % 3]);
          inside = d.y() < 0.0 || (d.y() == 0.0 && d.x() < 0.0);
        }
        if (!inside) continue;
        double x = 0.0;
        for (int m = 0; m < 3; ++m) x += e[m] / area * mesh.vertices[f[m]].x();
        crossings[static_cast<std::size_t>(k) * res + j].push_back(x);
      }
    }
  }

  std::vector<std::uint8_t> inside(static_cast<std::size_t>(res) * res * res, 0);
  for (int k = 0; k < res; ++k) {
    for (int j = 0; j < res; ++j) {
      auto& xs = crossings[static_cast<std::size_t>(k) * res + j];
      std::sort(xs.begin(), xs.end());
      std::size_t passed = 0;
      for (int i = 0; i < res; ++i) {
        const double xc = min.x() + (i + 0.5) * cell.x();
        while (passed < xs.size() && xs[passed] < xc) ++passed;
        inside[i + static_cast<std::size_t>(res) * (j + static_cast<std::size_t>(res) * k)] = passed % 2;
      }
    }
  }
  return inside;
}

double volume_iou(const TriangleMesh& a, const TriangleMesh& b, int grid_res) {
  if (grid_res < 1) throw DataError("grid resolution must be positive");
  if (!validate_manifold(a).closed) throw DataError("mesh a is not closed");
  if (!validate_manifold(b).closed) throw DataError("mesh b is not closed");
  BoundingBox box = bounding_box(a);
  const BoundingBox bb = bounding_box(b);
  box.extend(bb.min);
  box.extend(bb.max);
  const Vec3 pad = 0.05 * box.extent().cwiseMax(Vec3::Constant(1e-9));
  const Vec3 lo = box.min - pad, hi = box.max + pad;
  const auto va = voxelize(a, lo, hi, grid_res);
  const auto vb = voxelize(b, lo, hi, grid_res);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    inter += va[i] && vb[i];
    uni += va[i] || vb[i];
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

nlohmann::json MetricReport::to_json() const {
  return {{"chamfer", chamfer},
          {"volume_iou", volume_iou ? nlohmann::json(*volume_iou) : nlohmann::json(nullptr)},
          {"n_samples", n_samples},
          {"grid_res", grid_res},
          {"seed", seed},
          {"warnings", warnings}};
}

MetricReport compute_metrics(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples, int grid_res,
                             std::uint64_t seed) {
  MetricReport r;
  r.n_samples = n_samples;
  r.grid_res = grid_res;
  r.seed = seed;
  r.chamfer = chamfer_distance(a, b, n_samples, seed);
  try {
    r.volume_iou = volume_iou(a, b, grid_res);
  } catch (const DataError& e) {
    r.warnings.push_back(std::string("volume IoU skipped: ") + e.what());
  }
  return r;
}

}  // namespace nbrush
