// nbrush command line: batch pipeline steps and the session service.

#include "nbrush/enhance.hpp"
#include "nbrush/error.hpp"
#include "nbrush/metrics.hpp"
#include "nbrush/obj_io.hpp"
#include "nbrush/refine.hpp"
#include "nbrush/render.hpp"
#include "nbrush/scene.hpp"
#include "nbrush/service.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nbrush;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out) throw Error(path.string() + ": cannot write");
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

TriangleMesh read_mesh(const fs::path& path) {
  try {
    return read_obj_file(path);
  } catch (const DataError& e) {
    const std::string what = e.what();
    // read_obj_file already names the file in most cases.
    throw DataError(what.find(path.string()) == std::string::npos ? path.string() + ": " + what : what);
  }
}

// A targets directory holds view_XX.camera.json and view_XX.normal.png, and
// optionally view_XX.mask.png, for each view.
struct NamedTarget {
  std::string name;
  ViewTarget view;
};

std::vector<NamedTarget> read_targets(const fs::path& dir, bool need_normals = true) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  std::vector<std::string> names;
  const std::regex pattern(R"((view_[0-9A-Za-z_-]+)\.camera\.json)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (std::regex_match(file, m, pattern)) names.push_back(m[1]);
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw DataError(dir.string() + ": no view_*.camera.json files");
  std::vector<NamedTarget> out;
  for (const std::string& name : names) {
    try {
      const Camera cam = camera_from_json(read_json(dir / (name + ".camera.json")));
      NormalMap normals(cam.width(), cam.height());
      const fs::path png = dir / (name + ".normal.png");
      if (need_normals || fs::exists(png)) normals = decode_normal_png(read_file(png));
      std::optional<PixelMask> mask;
      const fs::path mask_png = dir / (name + ".mask.png");
      if (fs::exists(mask_png)) mask = decode_mask_png(read_file(mask_png));
      ViewTarget view{cam, std::move(normals), std::move(mask), 1.0};
      view.validate();
      out.push_back({name, std::move(view)});
    } catch (const DataError& e) {
      throw DataError(name + ": " + e.what());
    }
  }
  return out;
}

void write_target(const fs::path& dir, const std::string& name, const Camera& cam, const NormalMap* normals,
                  const PixelMask* mask) {
  write_file(dir / (name + ".camera.json"), camera_to_json(cam).dump(2) + "\n");
  if (normals) write_file(dir / (name + ".normal.png"), encode_normal_png(*normals));
  if (mask) write_file(dir / (name + ".mask.png"), encode_mask_png(*mask));
}

std::string view_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "view_%02zu", i);
  return buf;
}

json manifold_json(const ManifoldReport& r) {
  return {{"closed", r.closed},
          {"manifold", r.manifold()},
          {"boundary_edges", r.boundary_edges},
          {"nonmanifold_edges", r.nonmanifold_edges},
          {"nonmanifold_vertices", r.nonmanifold_vertices},
          {"isolated_vertices", r.isolated_vertices},
          {"euler_characteristic", r.euler_characteristic},
          {"vertices", r.vertex_count},
          {"edges", r.edge_count},
          {"faces", r.face_count}};
}

std::vector<Camera> view_set(int count, double radius, bool perspective, int res) {
  const Projection projection = perspective ? Projection(Perspective{}) : Projection(Orthographic{});
  if (count == 8) return orbit_view_set8(radius, projection, res, res);
  if (count == 4) {
    const auto four = orthogonal_view_set(radius, projection, res, res);
    return {four.begin(), four.end()};
  }
  throw DataError("--views must be 4 or 8");
}

std::unique_ptr<NormalEnhancer> make_enhancer(const std::string& kind, const std::string& target_mesh,
                                              const std::string& endpoint, std::uint64_t seed) {
  if (kind == "procedural") return make_procedural_enhancer({.seed = seed});
  if (kind == "oracle") {
    if (target_mesh.empty()) throw DataError("the oracle enhancer needs --target");
    return make_oracle_enhancer(read_mesh(target_mesh));
  }
  if (kind == "remote") {
    if (endpoint.empty()) throw DataError("the remote enhancer needs --endpoint");
    return make_remote_enhancer({.endpoint = endpoint});
  }
  throw DataError("unknown enhancer " + kind);
}

RefineConfig load_refine_config(const std::string& path) {
  return path.empty() ? RefineConfig{} : RefineConfig::from_json(read_json(path));
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nbrush: normal-guided mesh refinement"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config (refine config for refine/demo, enhance params for enhance)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed for sampling and procedural noise");

  // extract
  auto* extract = app.add_subcommand("extract", "marching cubes of a scene file");
  std::string scene_path, extract_out;
  int extract_res = 0;
  extract->add_option("scene", scene_path, "scene JSON")->required();
  extract->add_option("-o,--output", extract_out, "output OBJ")->required();
  extract->add_option("-r,--resolution", extract_res, "grid resolution (default: scene's, else 64)");

  // render
  auto* render = app.add_subcommand("render", "render normal maps of a mesh into a targets directory");
  std::string render_mesh, render_out;
  int render_res = 256, render_views = 8;
  double render_radius = kDefaultOrbitRadius;
  bool render_perspective = false;
  render->add_option("mesh", render_mesh, "input OBJ")->required();
  render->add_option("-o,--output", render_out, "targets directory")->required();
  render->add_option("--resolution", render_res, "pixels per side");
  render->add_option("--views", render_views, "4 (orthogonal) or 8 (orbit)")->check(CLI::IsMember({4, 8}));
  render->add_option("--radius", render_radius, "orbit radius");
  render->add_flag("--perspective", render_perspective, "perspective instead of orthographic");

  // enhance
  auto* enhance = app.add_subcommand("enhance", "enhance every view of a targets directory");
  std::string enhance_mesh, enhance_in, enhance_out, enhance_kind = "procedural", enhance_target, enhance_endpoint;
  enhance->add_option("mesh", enhance_mesh, "mesh whose renders are enhanced")->required();
  enhance->add_option("views", enhance_in, "directory with view_XX.camera.json (and masks)")->required();
  enhance->add_option("-o,--output", enhance_out, "output targets directory")->required();
  enhance->add_option("--enhancer", enhance_kind, "procedural, oracle or remote");
  enhance->add_option("--target", enhance_target, "target OBJ for the oracle enhancer");
  enhance->add_option("--endpoint", enhance_endpoint, "URL of a remote enhancer");

  // refine
  auto* refine_cmd = app.add_subcommand("refine", "refine a mesh against a targets directory");
  std::string refine_mesh, refine_targets, refine_out, refine_report;
  refine_cmd->add_option("mesh", refine_mesh, "coarse OBJ")->required();
  refine_cmd->add_option("targets", refine_targets, "targets directory")->required();
  refine_cmd->add_option("-o,--output", refine_out, "refined OBJ")->required();
  refine_cmd->add_option("--report", refine_report, "write the report JSON here as well as to stdout");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Chamfer distance and volume IoU between two meshes");
  std::string metrics_a, metrics_b;
  std::size_t metrics_samples = kDefaultChamferSamples;
  int metrics_grid = kDefaultIouResolution;
  metrics->add_option("a", metrics_a, "first OBJ")->required();
  metrics->add_option("b", metrics_b, "second OBJ")->required();
  metrics->add_option("--samples", metrics_samples, "surface samples per mesh");
  metrics->add_option("--grid", metrics_grid, "IoU grid resolution");

  // demo
  auto* demo = app.add_subcommand("demo", "sphere to bumpy sphere with the oracle enhancer");
  std::string demo_out;
  int demo_res = 192, demo_steps = 500;
  demo->add_option("-o,--output", demo_out, "output directory")->required();
  demo->add_option("--resolution", demo_res, "view resolution");
  demo->add_option("--steps", demo_steps, "refinement steps (ignored with --config)");

  // serve
  auto* serve = app.add_subcommand("serve", "run the session service");
  std::string serve_address = "127.0.0.1", serve_endpoint;
  unsigned short serve_port = 8080;
  int serve_history = 10;
  serve->add_option("--address", serve_address, "bind address");
  serve->add_option("--port", serve_port, "port, 0 for any");
  serve->add_option("--history", serve_history, "mesh snapshots kept per session");
  serve->add_option("--endpoint", serve_endpoint, "remote enhancer URL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*extract) {
      Scene scene = read_scene_file(scene_path);
      if (extract_res > 0) scene.resolution = extract_res;
      const TriangleMesh mesh = extract_scene(scene);
      json out = manifold_json(validate_manifold(mesh));
      if (mesh.faces.empty()) {
        out["warning"] = "empty surface";
        std::cerr << "warning: empty surface" << std::endl;
      }
      write_obj_file(extract_out, mesh);
      print(out);
    } else if (*render) {
      const TriangleMesh mesh = read_mesh(render_mesh);
      const NormalRenderer renderer(mesh);
      const auto cams = view_set(render_views, render_radius, render_perspective, render_res);
      for (std::size_t i = 0; i < cams.size(); ++i) {
        const NormalMap map = renderer.render(cams[i]).map;
        write_target(render_out, view_name(i), cams[i], &map, nullptr);
      }
      print({{"views", cams.size()}, {"directory", render_out}});
    } else if (*enhance) {
      EnhanceParams params = config_path.empty() ? EnhanceParams{} : EnhanceParams::from_json(read_json(config_path));
      if (app.count("--seed")) params.seed = seed;
      const auto enhancer = make_enhancer(enhance_kind, enhance_target, enhance_endpoint, seed);
      const NormalRenderer renderer(read_mesh(enhance_mesh));
      const auto views = read_targets(enhance_in, false);
      for (const NamedTarget& t : views) {
        const NormalMap rendered = renderer.render(t.view.camera).map;
        const PixelMask* mask = t.view.mask ? &*t.view.mask : nullptr;
        const NormalMap out = enhancer->enhance(rendered, params, mask, &t.view.camera);
        write_target(enhance_out, t.name, t.view.camera, &out, mask);
      }
      print({{"views", views.size()}, {"enhancer", enhancer->name()}, {"directory", enhance_out}});
    } else if (*refine_cmd) {
      const RefineConfig config = load_refine_config(config_path);
      const TriangleMesh mesh = read_mesh(refine_mesh);
      std::vector<ViewTarget> targets;
      for (auto& t : read_targets(refine_targets)) targets.push_back(std::move(t.view));
      const RefineResult r = refine(mesh, targets, config);
      write_obj_file(refine_out, r.mesh);
      const json report = r.report.to_json();
      if (!refine_report.empty()) write_file(refine_report, report.dump(2) + "\n");
      print(report);
    } else if (*metrics) {
      print(compute_metrics(read_mesh(metrics_a), read_mesh(metrics_b), metrics_samples, metrics_grid, seed)
                .to_json());
    } else if (*demo) {
      const fs::path dir = demo_out;
      const TriangleMesh coarse = extract_scene(parse_scene(demo_scene(false)));
      const TriangleMesh target = extract_scene(parse_scene(demo_scene(true)));
      write_obj_file(dir / "coarse.obj", coarse);
      write_obj_file(dir / "target.obj", target);
      const auto oracle = make_oracle_enhancer(target);
      const NormalRenderer renderer(coarse);
      std::vector<ViewTarget> targets;
      const auto cams = orbit_view_set8(kDefaultOrbitRadius, Orthographic{}, demo_res, demo_res);
      for (std::size_t i = 0; i < cams.size(); ++i) {
        NormalMap enhanced = oracle->enhance(renderer.render(cams[i]).map, {}, nullptr, &cams[i]);
        write_target(dir / "targets", view_name(i), cams[i], &enhanced, nullptr);
        targets.push_back({cams[i], std::move(enhanced), std::nullopt, 1.0});
      }
      RefineConfig config;
      if (!config_path.empty()) {
        config = load_refine_config(config_path);
      } else {
        config.steps = demo_steps;
        config.learning_rate = 0.002;
        config.l_target = 0.015;
        config.l_target_decay = 1.0;
      }
      write_file(dir / "config.json", config.to_json().dump(2) + "\n");
      const RefineResult r = refine_global(coarse, targets, config);
      write_obj_file(dir / "refined.obj", r.mesh);
      write_file(dir / "report.json", r.report.to_json().dump(2) + "\n");
      const double before = chamfer_distance(coarse, target, kDefaultChamferSamples, seed);
      const double after = chamfer_distance(r.mesh, target, kDefaultChamferSamples, seed);
      print({{"directory", dir.string()},
             {"chamfer_coarse", before},
             {"chamfer_refined", after},
             {"reduction", 1.0 - after / before},
             {"final_loss", r.report.final_loss},
             {"wall_seconds", r.report.wall_seconds}});
    } else if (*serve) {
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      // Block before any thread starts so only sigwait sees them.
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);
      ServiceOptions options;
      options.address = serve_address;
      options.port = serve_port;
      options.history = serve_history;
      if (!serve_endpoint.empty()) options.remote_endpoint = serve_endpoint;
      Service service(options);
      const unsigned short port = service.start();
      std::cout << json{{"listening", serve_address}, {"port", port}}.dump() << std::endl;
      int sig = 0;
      sigwait(&signals, &sig);
      std::cerr << "shutting down" << std::endl;
      service.stop();
    }
    return kExitOk;
  } catch (const DataError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "data"}}.dump() << std::endl;
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "internal"}}.dump() << std::endl;
    return kExitInternal;
  }
}
