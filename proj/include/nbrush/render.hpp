#pragma once

#include "nbrush/camera.hpp"
#include "nbrush/mesh.hpp"
#include "nbrush/normal_map.hpp"

#include <vector>

namespace nbrush {

// Vertices closer than this to the camera plane cull their faces.
inline constexpr double kNearClip = 1e-3;

// Which face landed on each pixel, for the backward pass and for visibility
// queries. Row-major with row 0 at the top, like NormalMap.
struct Rasterization {
  int width = 0;
  int height = 0;
  std::vector<int> face;     // -1 where uncovered
  std::vector<Vec3> bary;    // perspective-correct barycentrics
  std::vector<double> depth; // distance along the view axis; +inf where uncovered
};

struct Frame {
  NormalMap map;
  Rasterization raster;
};

// Software rasterizer over one mesh. Holds the smooth vertex normals and the
// gradient accumulators so several views can be summed before a single
// vertex_gradients() call.
//
// Fill rule: pixel centres strictly inside a triangle are covered; centres
// exactly on an edge go to the triangle for which that edge is a top or left
// edge. Edge functions are evaluated with the lower vertex index first so the
// two triangles sharing an edge see exactly negated values. Back faces and
// faces with a vertex within kNearClip of the camera plane are skipped.
// Depth ties keep the lower face index.
class NormalRenderer {
 public:
  explicit NormalRenderer(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }
  const std::vector<Vec3>& normals() const { return normals_; }

  Frame render(const Camera& camera) const;

  // Adds weight * dL/dV for one view. pixel_grad holds dL/dn per pixel in
  // camera space; only pixels covered in `raster` contribute. Pixel-to-face
  // assignment is taken from `raster` and held fixed.
  void accumulate(const Camera& camera, const Rasterization& raster, const std::vector<Vec3>& pixel_grad,
                  double weight = 1.0);

  // Total dL/dV over every accumulated view, including the dependence of the
  // vertex normals on the positions.
  std::vector<Vec3> vertex_gradients() const;

  void clear_gradients();

 private:
  TriangleMesh mesh_;
  std::vector<Vec3> normal_sums_;  // sum of incident face cross products
  std::vector<Vec3> normals_;
  std::vector<Vec3> grad_position_;
  std::vector<Vec3> grad_normal_;
};

NormalMap render_normals(const TriangleMesh& mesh, const Camera& camera);

// dL/dV for a single view. Throws DataError when pixel_grad does not match the
// camera resolution.
std::vector<Vec3> backward_normals(const TriangleMesh& mesh, const Camera& camera,
                                   const std::vector<Vec3>& pixel_grad);

}  // namespace nbrush
