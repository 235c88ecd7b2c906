#include "nbrush/render.hpp"

#include "nbrush/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nbrush {

namespace {

using Vec2 = Eigen::Vector2d;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct ScreenFace {
  std::array<Camera::Projected, 3> p;
  std::array<Vec2, 3> s;
  std::array<double, 3> w{};
  bool visible = false;
};

ScreenFace project_face(const TriangleMesh& mesh, const Face& f, const Camera& camera) {
  ScreenFace sf;
  for (int k = 0; k < 3; ++k) {
    sf.p[k] = camera.project(mesh.vertices[f[k]]);
    sf.s[k] = Vec2(sf.p[k].sx, sf.p[k].sy);
    sf.w[k] = sf.p[k].depth;
  }
  if (sf.w[0] < kNearClip || sf.w[1] < kNearClip || sf.w[2] < kNearClip) return sf;
  sf.visible = cross2(sf.s[1] - sf.s[0], sf.s[2] - sf.s[0]) > 0.0;
  return sf;
}

// Edge k runs from corner k+1 to corner k+2 and is evaluated with the lower
// global vertex index as its origin, so neighbours agree to the bit.
struct EdgeFunctions {
  std::array<double, 3> e{};
  double area = 0.0;
};

EdgeFunctions edge_functions(const ScreenFace& sf, const Face& f, const Vec2& q) {
  EdgeFunctions out;
  for (int k = 0; k < 3; ++k) {
    const int ia = (k + 1) % 3, ib = (k + 2) % 3;
    if (f[ia] < f[ib]) {
      out.e[k] = cross2(sf.s[ib] - sf.s[ia], q - sf.s[ia]);
    } else {
      out.e[k] = -cross2(sf.s[ia] - sf.s[ib], q - sf.s[ib]);
    }
  }
  out.area = out.e[0] + out.e[1] + out.e[2];
  return out;
}

// Screen y points up and visible faces are counter-clockwise, so the interior
// lies left of each directed edge. Top edges run in -x, left edges in -y.
std::array<bool, 3> top_left_edges(const ScreenFace& sf) {
  std::array<bool, 3> out{};
  for (int k = 0; k < 3; ++k) {
    const Vec2 d = sf.s[(k + 2) % 3] - sf.s[(k + 1) % 3];
    out[k] = d.y() < 0.0 || (d.y() == 0.0 && d.x() < 0.0);
  }
  return out;
}

struct PixelSample {
  Vec3 b;        // screen-space barycentrics
  Vec3 bp;       // perspective-correct barycentrics
  double depth;  // view-axis distance
  double h_sum;  // perspective only: sum of b_k / w_k
};

PixelSample interpolate(const ScreenFace& sf, const EdgeFunctions& ef, bool orthographic) {
  PixelSample ps;
  ps.b = Vec3(ef.e[0], ef.e[1], ef.e[2]) / ef.area;
  if (orthographic) {
    ps.bp = ps.b;
    ps.depth = ps.b[0] * sf.w[0] + ps.b[1] * sf.w[1] + ps.b[2] * sf.w[2];
    ps.h_sum = 1.0;
  } else {
    const Vec3 h(ps.b[0] / sf.w[0], ps.b[1] / sf.w[1], ps.b[2] / sf.w[2]);
    ps.h_sum = h.sum();
    ps.bp = h / ps.h_sum;
    ps.depth = 1.0 / ps.h_sum;
  }
  return ps;
}

constexpr double kMinInterpolatedNormal = 1e-12;

}  // namespace

NormalRenderer::NormalRenderer(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  mesh_.validate();
  normal_sums_.assign(mesh_.vertices.size(), Vec3::Zero());
  for (const Face& f : mesh_.faces) {
    const Vec3 c = face_cross(mesh_, f);
    if (0.5 * c.norm() < kDegenerateArea) continue;
    for (int v : f) normal_sums_[v] += c;
  }
  normals_.resize(normal_sums_.size());
  for (std::size_t i = 0; i < normals_.size(); ++i) {
    const double len = normal_sums_[i].norm();
    normals_[i] = len > 0.0 ? Vec3(normal_sums_[i] / len) : Vec3::UnitZ();
  }
  clear_gradients();
}

void NormalRenderer::clear_gradients() {
  grad_position_.assign(mesh_.vertices.size(), Vec3::Zero());
  grad_normal_.assign(mesh_.vertices.size(), Vec3::Zero());
}

Frame NormalRenderer::render(const Camera& camera) const {
  const int W = camera.width(), H = camera.height();
  const std::size_t n = static_cast<std::size_t>(W) * H;
  Frame frame;
  frame.map = NormalMap(W, H);
  Rasterization& r = frame.raster;
  r.width = W;
  r.height = H;
  r.face.assign(n, -1);
  r.bary.assign(n, Vec3::Zero());
  r.depth.assign(n, std::numeric_limits<double>::infinity());
  const bool ortho = camera.orthographic();

  for (std::size_t fi = 0; fi < mesh_.faces.size(); ++fi) {
    const Face& f = mesh_.faces[fi];
    const ScreenFace sf = project_face(mesh_, f, camera);
    if (!sf.visible) continue;
    const auto top_left = top_left_edges(sf);
    const double min_x = std::min({sf.s[0].x(), sf.s[1].x(), sf.s[2].x()});
    const double max_x = std::max({sf.s[0].x(), sf.s[1].x(), sf.s[2].x()});
    const double min_y = std::min({sf.s[0].y(), sf.s[1].y(), sf.s[2].y()});
    const double max_y = std::max({sf.s[0].y(), sf.s[1].y(), sf.s[2].y()});
    // Screen column c has its centre at c + 0.5; screen row j (from the bottom) likewise.
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int j0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int j1 = std::min(H - 1, static_cast<int>(std::floor(max_y - 0.5)));
    for (int j = j0; j <= j1; ++j) {
      const int y = H - 1 - j;
      for (int x = x0; x <= x1; ++x) {
        const Vec2 q(x + 0.5, j + 0.5);
        const EdgeFunctions ef = edge_functions(sf, f, q);
        bool inside = true;
        for (int k = 0; k < 3 && inside; ++k) inside = ef.e[k] > 0.0 || (ef.e[k] == 0.0 && top_left[k]);
        if (!inside || !(ef.area > 0.0)) continue;
        const PixelSample ps = interpolate(sf, ef, ortho);
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        if (ps.depth < r.depth[i]) {
          r.depth[i] = ps.depth;
          r.face[i] = static_cast<int>(fi);
          r.bary[i] = ps.bp;
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (r.face[i] < 0) continue;
    const Face& f = mesh_.faces[r.face[i]];
    const Vec3 N = r.bary[i][0] * normals_[f[0]] + r.bary[i][1] * normals_[f[1]] + r.bary[i][2] * normals_[f[2]];
    const double len = N.norm();
    Vec3 world;
    if (len >= kMinInterpolatedNormal) {
      world = N / len;
    } else {
      const Vec3 c = face_cross(mesh_, f);
      world = c.norm() > 0.0 ? Vec3(c.normalized()) : -camera.forward();
    }
    frame.map.normals[i] = camera.rotate(world);
    frame.map.coverage[i] = 1;
  }
  return frame;
}

void NormalRenderer::accumulate(const Camera& camera, const Rasterization& raster,
                                const std::vector<Vec3>& pixel_grad, double weight) {
  const int W = camera.width(), H = camera.height();
  const std::size_t n = static_cast<std::size_t>(W) * H;
  if (raster.width != W || raster.height != H || raster.face.size() != n) {
    throw DataError("rasterization does not match the camera resolution");
  }
  if (pixel_grad.size() != n) throw DataError("pixel gradient does not match the camera resolution");
  const bool ortho = camera.orthographic();

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      const int fi = raster.face[i];
      if (fi < 0) continue;
      const Vec3 g = weight * pixel_grad[i];
      if (g.isZero(0.0)) continue;
      if (fi >= static_cast<int>(mesh_.faces.size())) throw DataError("rasterization refers to a missing face");
      const Face& f = mesh_.faces[fi];
      const ScreenFace sf = project_face(mesh_, f, camera);
      const EdgeFunctions ef = edge_functions(sf, f, camera.pixel_center(x, y));
      if (!(ef.area > 0.0)) continue;
      const PixelSample ps = interpolate(sf, ef, ortho);

      const Vec3 N = ps.bp[0] * normals_[f[0]] + ps.bp[1] * normals_[f[1]] + ps.bp[2] * normals_[f[2]];
      const double len = N.norm();
      if (len < kMinInterpolatedNormal) continue;
      const Vec3 u = N / len;
      const Vec3 gw = camera.unrotate(g);
      const Vec3 dN = (gw - u * u.dot(gw)) / len;

      Vec3 c;
      for (int k = 0; k < 3; ++k) {
        grad_normal_[f[k]] += ps.bp[k] * dN;
        c[k] = normals_[f[k]].dot(dN);
      }

      Vec3 db, dw = Vec3::Zero();
      if (ortho) {
        db = c;
      } else {
        const double mean = ps.bp.dot(c);
        for (int k = 0; k < 3; ++k) {
          const double dh = (c[k] - mean) / ps.h_sum;
          db[k] = dh / sf.w[k];
          dw[k] = -dh * ps.b[k] / (sf.w[k] * sf.w[k]);
        }
      }
      const double mean_b = ps.b.dot(db);
      const Vec3 dE = (db - Vec3::Constant(mean_b)) / ef.area;

      // E_k = E(s_{k+1}, s_{k+2}, q).
      std::array<Vec2, 3> ds{Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
      const Vec2 q = camera.pixel_center(x, y);
      for (int k = 0; k < 3; ++k) {
        const Vec2& a = sf.s[(k + 1) % 3];
        const Vec2& b = sf.s[(k + 2) % 3];
        ds[(k + 1) % 3] += dE[k] * Vec2(b.y() - q.y(), q.x() - b.x());
        ds[(k + 2) % 3] += dE[k] * Vec2(q.y() - a.y(), a.x() - q.x());
      }
      for (int k = 0; k < 3; ++k) {
        const Camera::Projected& p = sf.p[k];
        grad_position_[f[k]] += ds[k].x() * p.dsx + ds[k].y() * p.dsy + dw[k] * p.ddepth;
      }
    }
  }
}

std::vector<Vec3> NormalRenderer::vertex_gradients() const {
  std::vector<Vec3> grad = grad_position_;
  std::vector<Vec3> dS(mesh_.vertices.size(), Vec3::Zero());
  for (std::size_t v = 0; v < dS.size(); ++v) {
    const double len = normal_sums_[v].norm();
    if (len <= 0.0) continue;
    const Vec3& nv = normals_[v];
    dS[v] = (grad_normal_[v] - nv * nv.dot(grad_normal_[v])) / len;
  }
  for (const Face& f : mesh_.faces) {
    const Vec3 c = face_cross(mesh_, f);
    if (0.5 * c.norm() < kDegenerateArea) continue;
    const Vec3 G = dS[f[0]] + dS[f[1]] + dS[f[2]];
    const Vec3 e1 = mesh_.vertices[f[1]] - mesh_.vertices[f[0]];
    const Vec3 e2 = mesh_.vertices[f[2]] - mesh_.vertices[f[0]];
    const Vec3 d1 = e2.cross(G);
    const Vec3 d2 = G.cross(e1);
    grad[f[1]] += d1;
    grad[f[2]] += d2;
    grad[f[0]] -= d1 + d2;
  }
  return grad;
}

NormalMap render_normals(const TriangleMesh& mesh, const Camera& camera) {
  return NormalRenderer(mesh).render(camera).map;
}

std::vector<Vec3> backward_normals(const TriangleMesh& mesh, const Camera& camera,
                                   const std::vector<Vec3>& pixel_grad) {
  if (pixel_grad.size() != static_cast<std::size_t>(camera.width()) * camera.height()) {
    throw DataError("pixel gradient does not match the camera resolution");
  }
  NormalRenderer renderer(mesh);
  const Frame frame = renderer.render(camera);
  renderer.accumulate(camera, frame.raster, pixel_grad);
  return renderer.vertex_gradients();
}

}  // namespace nbrush
