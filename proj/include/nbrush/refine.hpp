#pragma once

#include "nbrush/camera.hpp"
#include "nbrush/normal_map.hpp"
#include "nbrush/remesh.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nbrush {

struct ViewTarget {
  Camera camera;
  NormalMap target;
  std::optional<PixelMask> mask;  // edit region; absent means every pixel
  double weight = 1.0;

  // Throws DataError on size mismatches or a negative weight.
  void validate() const;
};

struct NormalLoss {
  double loss = 0.0;
  std::vector<Vec3> pixel_grad;  // dL/dn per pixel, camera space
  std::size_t active_pixels = 0;
  double coverage_mismatch = 0.0;  // pixels covered in exactly one map / covered in either
};

// Mean over active pixels of the per-channel L1 difference, where active means
// covered in both maps and selected by the mask. The gradient is
// sign(rendered - target) / |active| on active pixels.
NormalLoss normal_loss(const NormalMap& rendered, const NormalMap& target, const PixelMask* mask = nullptr);

// JSON keys match the field names; every key is optional.
//
//   {"steps": 500, "learning_rate": 0.01, "lambda": 0.3,
//    "remesh": {"enabled": true, "interval": 10, "l_target": null,
//               "l_target_factor": 0.5, "decay": 0.97, "floor": 0.25,
//               "split_factor": 1.3333, "collapse_factor": 0.8},
//    "local": false, "convergence_tolerance": 0, "convergence_window": 50,
//    "snapshot_interval": 25}
//
// A null l_target means l_target_factor times the mean edge length of the
// starting mesh. After each remesh pass l_target is multiplied by decay but
// never drops below floor times its starting value.
struct RefineConfig {
  int steps = 500;
  double learning_rate = 0.01;
  double lambda = 0.3;
  bool remesh_enabled = true;
  int remesh_interval = 10;
  std::optional<double> l_target;
  double l_target_factor = 0.5;
  double l_target_decay = 0.97;
  double l_target_floor = 0.25;
  double split_factor = 4.0 / 3.0;
  double collapse_factor = 4.0 / 5.0;
  bool local = false;
  double convergence_tolerance = 0.0;  // 0 disables the check
  int convergence_window = 50;
  int snapshot_interval = 25;

  void validate() const;
  nlohmann::json to_json() const;
  static RefineConfig from_json(const nlohmann::json& doc);
};

enum class Termination { steps_exhausted, converged, cancelled };
std::string to_string(Termination t);

struct RefineReport {
  std::vector<double> loss;  // total loss of the mesh evaluated at each step
  std::vector<int> vertex_counts;
  std::vector<int> face_counts;
  double final_loss = 0.0;  // loss of the mesh after the last update
  double best_loss = 0.0;   // loss of the returned mesh
  std::vector<double> view_losses;        // of the returned mesh
  std::vector<double> coverage_mismatch;  // of the returned mesh
  int best_step = 0;  // step whose mesh was returned; steps_executed means the final mesh
  int steps_executed = 0;
  int remesh_passes = 0;
  int active_vertices = 0;  // local mode only
  double wall_seconds = 0.0;
  Termination termination = Termination::steps_exhausted;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct StepEvent {
  int step = 0;
  double loss = 0.0;
  std::vector<double> view_losses;
  int vertex_count = 0;
  int face_count = 0;
  bool remeshed = false;  // a remesh pass followed this step's update
};

struct ProgressSink {
  std::function<void(const StepEvent&)> on_step;
  std::function<void(int step, const TriangleMesh&)> on_snapshot;  // every snapshot_interval steps
  std::function<bool()> should_cancel;                             // polled before each step
};

struct RefineResult {
  TriangleMesh mesh;
  RefineReport report;
};

// Multi-view loss over the current mesh; fills per-view losses when asked.
double evaluate_views(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets,
                      std::vector<double>* view_losses = nullptr, std::vector<double>* mismatch = nullptr);

// Each step renders every view, adds the weighted losses, backpropagates,
// takes an Adam step, applies the relative Laplacian update and every
// remesh_interval steps runs remesh_pass. The returned mesh is whichever of
// the evaluated meshes (each step's input plus the final one) had the lowest
// loss; ties keep the earlier mesh.
RefineResult refine_global(const TriangleMesh& coarse, const std::vector<ViewTarget>& targets,
                           const RefineConfig& config, const ProgressSink& sink = {});

// Visibility-tested mask activation for local editing: a vertex is active when
// it lands on a selected, covered pixel of some view and lies within 1e-3 of
// that pixel's depth; the 1-ring of active vertices forms the band.
std::vector<Region> edit_regions(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets);

// Like refine_global but only active vertices move fully and band vertices at
// half rate; everything else is returned bit-identical. Every target needs a
// mask. When every mask selects every pixel this is refine_global.
RefineResult refine_local(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets,
                          const RefineConfig& config, const ProgressSink& sink = {});

// Dispatches on config.local.
RefineResult refine(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets, const RefineConfig& config,
                    const ProgressSink& sink = {});

}  // namespace nbrush
