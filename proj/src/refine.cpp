#include "nbrush/refine.hpp"

#include "nbrush/error.hpp"
#include "nbrush/render.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace nbrush {

using nlohmann::json;

void ViewTarget::validate() const {
  if (target.width != camera.width() || target.height != camera.height()) {
    throw DataError("target is " + std::to_string(target.width) + "x" + std::to_string(target.height) +
                    " but the camera renders " + std::to_string(camera.width()) + "x" +
                    std::to_string(camera.height()));
  }
  if (target.normals.size() != target.pixel_count() || target.coverage.size() != target.pixel_count()) {
    throw DataError("target normal map is malformed");
  }
  if (mask && (mask->width != target.width || mask->height != target.height ||
               mask->values.size() != target.pixel_count())) {
    throw DataError("mask resolution does not match the target");
  }
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw DataError("view weight must be finite and non-negative");
}

NormalLoss normal_loss(const NormalMap& rendered, const NormalMap& target, const PixelMask* mask) {
  if (!rendered.same_size(target)) throw DataError("rendered and target normal maps differ in size");
  if (mask && (mask->width != rendered.width || mask->height != rendered.height)) {
    throw DataError("mask resolution does not match the normal map");
  }
  const std::size_t n = rendered.pixel_count();
  NormalLoss out;
  out.pixel_grad.assign(n, Vec3::Zero());
  std::size_t either = 0, one = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = rendered.covered(i), b = target.covered(i);
    either += a || b;
    one += a != b;
    if (a && b && (!mask || (*mask)[i])) ++out.active_pixels;
  }
  out.coverage_mismatch = either ? static_cast<double>(one) / either : 0.0;
  if (out.active_pixels == 0) return out;
  const double inv = 1.0 / static_cast<double>(out.active_pixels);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!rendered.covered(i) || !target.covered(i) || (mask && !(*mask)[i])) continue;
    const Vec3 d = rendered.normals[i] - target.normals[i];
    sum += d.cwiseAbs().sum();
    for (int c = 0; c < 3; ++c) out.pixel_grad[i][c] = d[c] > 0.0 ? inv : (d[c] < 0.0 ? -inv : 0.0);
  }
  out.loss = sum * inv;
  return out;
}

void RefineConfig::validate() const {
  if (steps < 1) throw DataError("steps must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw DataError("learning_rate must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DataError("lambda must lie in [0, 1]");
  if (remesh_interval < 1) throw DataError("remesh interval must be at least 1");
  if (l_target && !(*l_target > 0.0)) throw DataError("l_target must be positive");
  if (!(l_target_factor > 0.0)) throw DataError("l_target_factor must be positive");
  if (!(l_target_decay > 0.0 && l_target_decay <= 1.0)) throw DataError("decay must lie in (0, 1]");
  if (!(l_target_floor > 0.0 && l_target_floor <= 1.0)) throw DataError("floor must lie in (0, 1]");
  if (!(collapse_factor > 0.0 && collapse_factor < 1.0 && split_factor > 1.0)) {
    throw DataError("remesh factors must satisfy 0 < collapse < 1 < split");
  }
  if (!(convergence_tolerance >= 0.0)) throw DataError("convergence_tolerance must be >= 0");
  if (convergence_window < 1) throw DataError("convergence_window must be at least 1");
  if (snapshot_interval < 1) throw DataError("snapshot_interval must be at least 1");
}

json RefineConfig::to_json() const {
  return {{"steps", steps},
          {"learning_rate", learning_rate},
          {"lambda", lambda},
          {"remesh",
           {{"enabled", remesh_enabled},
            {"interval", remesh_interval},
            {"l_target", l_target ? json(*l_target) : json(nullptr)},
            {"l_target_factor", l_target_factor},
            {"decay", l_target_decay},
            {"floor", l_target_floor},
            {"split_factor", split_factor},
            {"collapse_factor", collapse_factor}}},
          {"local", local},
          {"convergence_tolerance", convergence_tolerance},
          {"convergence_window", convergence_window},
          {"snapshot_interval", snapshot_interval}};
}

RefineConfig RefineConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw DataError("refine config must be a JSON object");
  RefineConfig c;
  try {
    auto read = [](const json& obj, const char* key, auto& field) {
      if (auto it = obj.find(key); it != obj.end()) {
        it->get_to(field);
      }
    };
    read(doc, "steps", c.steps);
    read(doc, "learning_rate", c.learning_rate);
    read(doc, "lambda", c.lambda);
    read(doc, "local", c.local);
    read(doc, "convergence_tolerance", c.convergence_tolerance);
    read(doc, "convergence_window", c.convergence_window);
    read(doc, "snapshot_interval", c.snapshot_interval);
    if (auto it = doc.find("remesh"); it != doc.end()) {
      const json& r = *it;
      if (!r.is_object()) throw DataError("refine config: remesh must be an object");
      read(r, "enabled", c.remesh_enabled);
      read(r, "interval", c.remesh_interval);
      if (auto lt = r.find("l_target"); lt != r.end() && !lt->is_null()) c.l_target = lt->get<double>();
      read(r, "l_target_factor", c.l_target_factor);
      read(r, "decay", c.l_target_decay);
      read(r, "floor", c.l_target_floor);
      read(r, "split_factor", c.split_factor);
      read(r, "collapse_factor", c.collapse_factor);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("refine config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::steps_exhausted: return "steps_exhausted";
    case Termination::converged: return "converged";
    case Termination::cancelled: return "cancelled";
  }
  return "unknown";
}

json RefineReport::to_json() const {
  return {{"loss", loss},
          {"final_loss", final_loss},
          {"best_loss", best_loss},
          {"vertex_counts", vertex_counts},
          {"face_counts", face_counts},
          {"view_losses", view_losses},
          {"coverage_mismatch", coverage_mismatch},
          {"best_step", best_step},
          {"steps_executed", steps_executed},
          {"remesh_passes", remesh_passes},
          {"active_vertices", active_vertices},
          {"wall_seconds", wall_seconds},
          {"termination", to_string(termination)},
          {"warnings", warnings}};
}

double evaluate_views(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets,
                      std::vector<double>* view_losses, std::vector<double>* mismatch) {
  const NormalRenderer renderer(mesh);
  double total = 0.0;
  if (view_losses) view_losses->clear();
  if (mismatch) mismatch->clear();
  for (const ViewTarget& t : targets) {
    const NormalLoss l = normal_loss(renderer.render(t.camera).map, t.target, t.mask ? &*t.mask : nullptr);
    total += t.weight * l.loss;
    if (view_losses) view_losses->push_back(l.loss);
    if (mismatch) mismatch->push_back(l.coverage_mismatch);
  }
  return total;
}

namespace {

void check_inputs(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets, const RefineConfig& config) {
  config.validate();
  mesh.validate();
  if (mesh.faces.empty()) throw DataError("cannot refine an empty mesh");
  if (targets.empty()) throw DataError("refinement needs at least one view target");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    try {
      targets[i].validate();
    } catch (const DataError& e) {
      throw DataError("view " + std::to_string(i) + ": " + e.what());
    }
  }
}

RefineResult run(const TriangleMesh& start, const std::vector<ViewTarget>& targets, const RefineConfig& config,
                 const ProgressSink& sink, std::vector<Region> region) {
  const auto clock_start = std::chrono::steady_clock::now();
  RefineResult result;
  RefineReport& report = result.report;

  const ManifoldReport manifold = validate_manifold(start);
  if (!manifold.closed) report.warnings.push_back("input mesh is not closed");
  bool remesh = config.remesh_enabled;
  if (remesh && !manifold.manifold()) {
    report.warnings.push_back("input mesh is not manifold; remeshing disabled");
    remesh = false;
  }
  const double l_start = config.l_target ? *config.l_target : config.l_target_factor * mean_edge_length(start);
  RemeshParams remesh_params;
  remesh_params.l_target = l_start;
  remesh_params.split_factor = config.split_factor;
  remesh_params.collapse_factor = config.collapse_factor;
  remesh_params.interval = config.remesh_interval;
  if (remesh) remesh_params.validate();

  AdamParams adam;
  adam.learning_rate = config.learning_rate;

  TriangleMesh mesh = start;
  OptimizerState state = OptimizerState::fresh(mesh);
  state.region = std::move(region);

  TriangleMesh best = mesh;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_step = 0;
  bool stopped_before_update = false;

  auto consider = [&](double loss, int step) {
    if (loss < best_loss) {
      best_loss = loss;
      best = mesh;
      best_step = step;
    }
  };

  for (int k = 0; k < config.steps; ++k) {
    if (sink.should_cancel && sink.should_cancel()) {
      report.termination = Termination::cancelled;
      break;
    }
    NormalRenderer renderer(mesh);
    double total = 0.0;
    StepEvent event;
    event.step = k;
    for (const ViewTarget& t : targets) {
      const Frame frame = renderer.render(t.camera);
      const NormalLoss l = normal_loss(frame.map, t.target, t.mask ? &*t.mask : nullptr);
      total += t.weight * l.loss;
      event.view_losses.push_back(l.loss);
      if (t.weight > 0.0 && l.active_pixels > 0) renderer.accumulate(t.camera, frame.raster, l.pixel_grad, t.weight);
    }
    if (!std::isfinite(total)) throw NumericError("step " + std::to_string(k) + ": loss is not finite");
    report.loss.push_back(total);
    report.vertex_counts.push_back(static_cast<int>(mesh.vertices.size()));
    report.face_counts.push_back(static_cast<int>(mesh.faces.size()));
    report.steps_executed = k + 1;
    consider(total, k);
    event.loss = total;
    event.vertex_count = static_cast<int>(mesh.vertices.size());
    event.face_count = static_cast<int>(mesh.faces.size());

    const int w = config.convergence_window;
    if (config.convergence_tolerance > 0.0 && k >= w && report.loss[k - w] - total < config.convergence_tolerance) {
      report.termination = Termination::converged;
      stopped_before_update = true;
      if (sink.on_step) sink.on_step(event);
      break;
    }

    std::vector<Vec3> grad = renderer.vertex_gradients();
    if (state.local()) {
      for (std::size_t v = 0; v < grad.size(); ++v) {
        if (state.region[v] == Region::inactive) grad[v].setZero();
      }
    }
    std::vector<Vec3> step;
    try {
      step = adam_step(state, grad, adam);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(k) + ": " + e.what());
    }
    std::vector<double> strength(mesh.vertices.size());
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      const double weight = region_weight(state.region_of(v));
      strength[v] = state.speed[v] * weight;
      if (weight > 0.0) mesh.vertices[v] += weight * step[v];
    }
    mesh.vertices =
        relative_laplacian_update(mesh.vertices, state.x_init, config.lambda, strength, build_adjacency(mesh));

    if (remesh && (k + 1) % config.remesh_interval == 0) {
      RemeshResult r = remesh_pass(mesh, state, remesh_params);
      mesh = std::move(r.mesh);
      state = std::move(r.state);
      ++report.remesh_passes;
      remesh_params.l_target = std::max(remesh_params.l_target * config.l_target_decay, config.l_target_floor * l_start);
      event.remeshed = true;
    }
    if (sink.on_step) sink.on_step(event);
    if (sink.on_snapshot && (k + 1) % config.snapshot_interval == 0) sink.on_snapshot(k + 1, mesh);
  }

  if (stopped_before_update) {
    report.final_loss = report.loss.back();
  } else {
    report.final_loss = evaluate_views(mesh, targets);
    consider(report.final_loss, report.steps_executed);
  }
  result.mesh = std::move(best);
  report.best_step = best_step;
  report.best_loss = best_loss;
  evaluate_views(result.mesh, targets, &report.view_losses, &report.coverage_mismatch);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return result;
}

}  // namespace

RefineResult refine_global(const TriangleMesh& coarse, const std::vector<ViewTarget>& targets,
                           const RefineConfig& config, const ProgressSink& sink) {
  check_inputs(coarse, targets, config);
  return run(coarse, targets, config, sink, {});
}

std::vector<Region> edit_regions(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets) {
  constexpr double kDepthSlack = 1e-3;
  std::vector<Region> region(mesh.vertices.size(), Region::inactive);
  const NormalRenderer renderer(mesh);
  for (const ViewTarget& t : targets) {
    if (!t.mask) continue;
    const Frame frame = renderer.render(t.camera);
    const int W = t.camera.width(), H = t.camera.height();
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      if (region[v] == Region::active) continue;
      const auto p = t.camera.project(mesh.vertices[v]);
      const double fx = std::floor(p.sx), fj = std::floor(p.sy);
      if (!(fx >= 0 && fx < W && fj >= 0 && fj < H)) continue;
      const std::size_t i = static_cast<std::size_t>(H - 1 - static_cast<int>(fj)) * W + static_cast<int>(fx);
      if (!(*t.mask)[i] || frame.raster.face[i] < 0) continue;
      if (p.depth <= frame.raster.depth[i] + kDepthSlack) region[v] = Region::active;
    }
  }
  const MeshAdjacency adj(mesh);
  std::vector<Region> out = region;
  for (std::size_t v = 0; v < region.size(); ++v) {
    if (region[v] != Region::active) continue;
    for (int u : adj.neighbors(static_cast<int>(v))) {
      if (out[u] == Region::inactive) out[u] = Region::band;
    }
  }
  return out;
}

RefineResult refine_local(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets,
                          const RefineConfig& config, const ProgressSink& sink) {
  check_inputs(mesh, targets, config);
  bool any = false, all = true;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i].mask) throw DataError("view " + std::to_string(i) + ": local refinement needs a mask");
    const std::size_t selected = targets[i].mask->count();
    any = any || selected > 0;
    all = all && selected == targets[i].mask->values.size();
  }
  if (!any) throw DataError("empty edit region");
  if (all) return run(mesh, targets, config, sink, {});

  std::vector<Region> region = edit_regions(mesh, targets);
  const auto active = std::count(region.begin(), region.end(), Region::active);
  if (active == 0) throw DataError("empty edit region: no visible vertex lies under the masks");
  RefineResult r = run(mesh, targets, config, sink, std::move(region));
  r.report.active_vertices = static_cast<int>(active);
  return r;
}

RefineResult refine(const TriangleMesh& mesh, const std::vector<ViewTarget>& targets, const RefineConfig& config,
                    const ProgressSink& sink) {
  return config.local ? refine_local(mesh, targets, config, sink) : refine_global(mesh, targets, config, sink);
}

}  // namespace nbrush
