#pragma once

#include "nbrush/mesh.hpp"

#include <cstdint>
#include <vector>

namespace nbrush {

// Per-vertex edit region used by local refinement. Weights 0, 0.5 and 1 scale
// the vertex update.
enum class Region : std::uint8_t { inactive = 0, band = 1, active = 2 };

double region_weight(Region r);

struct OptimizerState {
  std::vector<Vec3> m1;       // first moment
  std::vector<double> m2;     // second moment of |g|
  std::vector<double> speed;  // relative speed v in [0, 1]
  std::vector<Vec3> x_init;   // anchor positions
  std::vector<Region> region; // empty means every vertex is active
  int t = 0;

  // Zero moments, anchors at the current positions.
  static OptimizerState fresh(const TriangleMesh& mesh);

  std::size_t size() const { return x_init.size(); }
  bool local() const { return !region.empty(); }
  Region region_of(std::size_t v) const { return region.empty() ? Region::active : region[v]; }

  // Throws DataError unless every array has n entries (region may be empty).
  void check_aligned(std::size_t n) const;
};

// (W f)_i = mean of f over the neighbours of i, minus f_i. Isolated vertices
// give zero.
std::vector<Vec3> laplacian_apply(const MeshAdjacency& adjacency, const std::vector<Vec3>& field);

struct AdamParams {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One Adam step with a scalar second moment per vertex. Returns the proposed
// displacement -lr * m1_hat / (sqrt(m2_hat) + eps) and sets
// speed = min(1, |m1_hat| / (sqrt(m2_hat) + eps)). Throws NumericError naming
// the first vertex with a non-finite gradient; the state is untouched then.
std::vector<Vec3> adam_step(OptimizerState& state, const std::vector<Vec3>& gradients, const AdamParams& params);

// With d = x - x_init, returns x_init + d + lambda * v_i * (W d)_i. Vertices
// with lambda * v_i == 0 are returned unchanged bit for bit.
std::vector<Vec3> relative_laplacian_update(const std::vector<Vec3>& x, const std::vector<Vec3>& x_init,
                                            double lambda, const std::vector<double>& v,
                                            const MeshAdjacency& adjacency);

struct RemeshParams {
  double l_target = 0.02;
  double split_factor = 4.0 / 3.0;
  double collapse_factor = 4.0 / 5.0;
  int interval = 10;
  bool split = true;
  bool collapse = true;
  bool flip = true;

  void validate() const;
};

struct RemeshStats {
  int splits = 0;
  int collapses = 0;
  int flips = 0;

  bool changed() const { return splits + collapses + flips > 0; }
};

struct RemeshResult {
  TriangleMesh mesh;
  OptimizerState state;
  RemeshStats stats;
};

// One connectivity pass:
//  1. every edge longer than split_factor * l_target is split at its midpoint
//     at once, faces re-triangulated red-green style;
//  2. edges shorter than collapse_factor * l_target collapse to their midpoint,
//     shortest first, when the link condition holds, no surviving face turns
//     by 90 degrees or more, and neither endpoint was already merged this pass;
//  3. edges with two faces are flipped when the squared deviation of the four
//     valences from 6 (4 on the boundary) strictly drops.
// New and merged vertices average the state of the edge endpoints; the
// region of a new vertex is the smaller of the two. In local mode only faces
// with an active vertex are edited and collapses need two active endpoints.
// Throws DataError on non-manifold input or misaligned state.
RemeshResult remesh_pass(const TriangleMesh& mesh, const OptimizerState& state, const RemeshParams& params);

}  // namespace nbrush
