#pragma once

#include "nbrush/fields.hpp"
#include "nbrush/mesh.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace nbrush {

inline constexpr std::size_t kDefaultChamferSamples = 100000;
inline constexpr int kDefaultIouResolution = 64;

// Seed used to sample `mesh`: a hash of its vertices and faces mixed with
// `seed`. Depends on nothing else, so CD(a, b) == CD(b, a) bit for bit.
std::uint64_t sample_seed(const TriangleMesh& mesh, std::uint64_t seed);

// 0.5 * (mean over a-samples of the distance to the nearest b-sample + the
// same from b to a). Distances are plain L2; nearest neighbours are exact.
// Throws DataError when either mesh has zero area.
double chamfer_distance(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples = kDefaultChamferSamples,
                        std::uint64_t seed = 0);

using RegionPredicate = std::function<bool(const Vec3&)>;

// Chamfer distance restricted to the samples inside `region`. Uses the same
// samples as chamfer_distance with the same seed. Throws DataError when the
// region keeps fewer than 1% of either mesh's samples.
double masked_chamfer(const TriangleMesh& a, const TriangleMesh& b, const RegionPredicate& region,
                      std::size_t n_samples = kDefaultChamferSamples, std::uint64_t seed = 0);
// Region given as a field: points with value <= 0.
double masked_chamfer(const TriangleMesh& a, const TriangleMesh& b, const ScalarField& region,
                      std::size_t n_samples = kDefaultChamferSamples, std::uint64_t seed = 0);

// Voxel IoU over the union bounding box padded by 5% per side, grid_res
// voxels per axis. A voxel is inside a mesh when a ray from its centre along
// +x crosses the surface an odd number of times. Throws DataError naming the
// mesh ("a" or "b") when it is not closed.
double volume_iou(const TriangleMesh& a, const TriangleMesh& b, int grid_res = kDefaultIouResolution);

// Parity inside test on an arbitrary grid of voxel centres, exposed for tests.
// Returns one flag per voxel, x fastest.
std::vector<std::uint8_t> voxelize(const TriangleMesh& mesh, const Vec3& min, const Vec3& max, int grid_res);

struct MetricReport {
  double chamfer = 0.0;
  std::optional<double> volume_iou;  // absent when a mesh is not closed
  std::size_t n_samples = kDefaultChamferSamples;
  int grid_res = kDefaultIouResolution;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

MetricReport compute_metrics(const TriangleMesh& a, const TriangleMesh& b,
                             std::size_t n_samples = kDefaultChamferSamples, int grid_res = kDefaultIouResolution,
                             std::uint64_t seed = 0);

}  // namespace nbrush
