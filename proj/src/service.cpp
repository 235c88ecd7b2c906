#include "nbrush/service.hpp"

#include "nbrush/base64.hpp"
#include "nbrush/enhance.hpp"
#include "nbrush/error.hpp"
#include "nbrush/metrics.hpp"
#include "nbrush/obj_io.hpp"
#include "nbrush/refine.hpp"
#include "nbrush/render.hpp"
#include "nbrush/scene.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <sys/socket.h>

#include <atomic>
#include <cctype>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

namespace nbrush {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

struct HttpError : Error {
  HttpError(http::status s, const std::string& what) : Error(what), status(s) {}
  http::status status;
};

struct Reply {
  http::status status = http::status::ok;
  std::string content_type = "application/json";
  std::string body;
};

Reply json_reply(const json& body, http::status status = http::status::ok) {
  return {status, "application/json", body.dump()};
}

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(s[i] == '+' ? ' ' : s[i]);
    }
  }
  return out;
}

struct Target {
  std::vector<std::string> path;
  std::map<std::string, std::string> query;

  const std::string* param(const std::string& key) const {
    const auto it = query.find(key);
    return it == query.end() ? nullptr : &it->second;
  }
  double number(const std::string& key, double fallback) const {
    const std::string* v = param(key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument(key);
      return d;
    } catch (const std::logic_error&) {
      throw DataError("query parameter " + key + " is not a number: " + *v);
    }
  }
};

Target parse_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  std::string_view path = target.substr(0, q);
  while (!path.empty()) {
    const auto slash = path.find('/');
    if (slash != 0) t.path.push_back(percent_decode(path.substr(0, slash)));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  if (q != std::string_view::npos) {
    std::string_view query = target.substr(q + 1);
    while (!query.empty()) {
      const auto amp = query.find('&');
      const std::string_view pair = query.substr(0, amp);
      const auto eq = pair.find('=');
      if (!pair.empty()) {
        t.query[percent_decode(pair.substr(0, eq))] =
            eq == std::string_view::npos ? "" : percent_decode(pair.substr(eq + 1));
      }
      if (amp == std::string_view::npos) break;
      query.remove_prefix(amp + 1);
    }
  }
  return t;
}

json parse_body(const Request& req) {
  try {
    return json::parse(req.body());
  } catch (const json::exception& e) {
    throw DataError(std::string("request body is not JSON: ") + e.what());
  }
}

class IdSource {
 public:
  std::string next(const char* prefix) {
    std::lock_guard lock(mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%llx%08x", prefix, static_cast<unsigned long long>(++counter_),
                  static_cast<unsigned>(rng_()));
    return buf;
  }

 private:
  std::mutex mutex_;
  std::uint64_t counter_ = 0;
  std::mt19937 rng_{std::random_device{}()};
};

struct Job {
  std::string id;
  std::string session_id;
  std::mutex mutex;
  std::condition_variable changed;
  std::vector<std::string> frames;
  std::string phase = "optimizing";
  bool finished = false;
  std::atomic<bool> cancel{false};
  std::thread thread;

  void push(json event, bool terminal) {
    {
      std::lock_guard lock(mutex);
      phase = event.at("phase").get<std::string>();
      frames.push_back(event.dump());
      finished = terminal;
    }
    changed.notify_all();
  }
};

struct Session {
  std::string id;
  std::mutex mutex;
  std::shared_ptr<const TriangleMesh> mesh;
  std::shared_ptr<const TriangleMesh> anchor;
  std::deque<std::shared_ptr<const TriangleMesh>> history;
  std::map<std::string, std::string> views;  // rendered PNGs of the current mesh
  std::map<std::string, std::string> masks;  // PNG bytes as uploaded
  std::shared_ptr<Job> job;

  std::shared_ptr<const TriangleMesh> current() {
    std::lock_guard lock(mutex);
    return mesh;
  }

  void publish(TriangleMesh m, std::size_t limit) {
    auto ptr = std::make_shared<const TriangleMesh>(std::move(m));
    std::lock_guard lock(mutex);
    mesh = ptr;
    history.push_back(ptr);
    while (history.size() > limit) history.pop_front();
    views.clear();
  }
};

Camera camera_from_query(const Target& t) {
  json doc = {{"azimuth", t.number("azimuth", 0.0)},
              {"elevation", t.number("elevation", 0.0)},
              {"radius", t.number("radius", kDefaultOrbitRadius)},
              {"width", static_cast<int>(t.number("width", kDefaultResolution))},
              {"height", static_cast<int>(t.number("height", kDefaultResolution))}};
  const std::string* projection = t.param("projection");
  if (projection && *projection == "perspective") {
    doc["projection"] = {{"type", "perspective"}, {"fov_deg", t.number("fov", Perspective{}.fov_deg)}};
  } else if (projection && *projection != "orthographic") {
    throw DataError("unknown projection " + *projection);
  } else {
    doc["projection"] = {{"type", "orthographic"}, {"half_height", t.number("half_height", 0.6)}};
  }
  return camera_from_json(doc);
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  bool started = false;

  std::mutex conn_mutex;
  std::condition_variable conn_done;
  std::set<int> open_sockets;
  std::set<int> streaming;  // sockets serving a job stream
  int live_connections = 0;

  std::mutex state_mutex;
  std::condition_variable stopped;
  bool stop_called = false;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  IdSource ids;

  explicit Impl(ServiceOptions o) : options(std::move(o)) {
    if (options.history < 1) throw DataError("snapshot history must hold at least one mesh");
  }

  // Lookups

  std::shared_ptr<Session> session(const std::string& id) {
    std::lock_guard lock(state_mutex);
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError(http::status::not_found, "no session " + id);
    return it->second;
  }

  std::shared_ptr<Job> job(const std::string& id) {
    std::lock_guard lock(state_mutex);
    const auto it = jobs.find(id);
    if (it == jobs.end()) throw HttpError(http::status::not_found, "no job " + id);
    return it->second;
  }

  std::optional<PixelMask> mask_from(const std::shared_ptr<Session>& s, const json& doc) {
    if (doc.contains("mask_png_base64")) {
      return decode_mask_png(base64_decode(doc.at("mask_png_base64").get<std::string>()));
    }
    if (doc.contains("mask")) {
      const std::string name = doc.at("mask").get<std::string>();
      std::lock_guard lock(s->mutex);
      const auto it = s->masks.find(name);
      if (it == s->masks.end()) throw DataError("no mask named " + name);
      return decode_mask_png(it->second);
    }
    return std::nullopt;
  }

  // Handlers

  Reply create_session(const Request& req, const Target& t) {
    TriangleMesh mesh;
    if (const std::string* demo = t.param("demo")) {
      if (*demo != "coarse" && *demo != "target") throw DataError("demo must be coarse or target");
      mesh = extract_scene(parse_scene(demo_scene(*demo == "target")));
    } else {
      const auto type = req[http::field::content_type];
      const bool is_json = type.find("json") != beast::string_view::npos ||
                           (!req.body().empty() && req.body().find_first_not_of(" \t\r\n") != std::string::npos &&
                            req.body()[req.body().find_first_not_of(" \t\r\n")] == '{');
      mesh = is_json ? extract_scene(parse_scene(parse_body(req))) : load_obj(req.body());
    }
    if (mesh.faces.empty()) throw DataError("mesh has no faces");
    auto s = std::make_shared<Session>();
    s->id = ids.next("s");
    s->anchor = std::make_shared<const TriangleMesh>(mesh);
    s->publish(std::move(mesh), options.history);
    const auto report = validate_manifold(*s->mesh);
    json body = {{"session_id", s->id},
                 {"vertices", s->mesh->vertices.size()},
                 {"faces", s->mesh->faces.size()},
                 {"closed", report.closed}};
    std::lock_guard lock(state_mutex);
    sessions[s->id] = s;
    return json_reply(body, http::status::created);
  }

  Reply session_summary(const std::shared_ptr<Session>& s) {
    std::lock_guard lock(s->mutex);
    json masks = json::array();
    for (const auto& [name, png] : s->masks) masks.push_back(name);
    json job = nullptr;
    if (s->job) {
      std::lock_guard jl(s->job->mutex);
      job = {{"job_id", s->job->id}, {"phase", s->job->phase}};
    }
    return json_reply({{"session_id", s->id},
                       {"vertices", s->mesh->vertices.size()},
                       {"faces", s->mesh->faces.size()},
                       {"anchor_vertices", s->anchor->vertices.size()},
                       {"snapshots", s->history.size()},
                       {"masks", masks},
                       {"job", job}});
  }

  Reply get_mesh(const std::shared_ptr<Session>& s, const Target& t) {
    std::shared_ptr<const TriangleMesh> mesh;
    if (t.param("snapshot")) {
      const double i = t.number("snapshot", 0);
      std::lock_guard lock(s->mutex);
      if (!(i >= 0 && i < static_cast<double>(s->history.size())) || i != std::floor(i)) {
        throw HttpError(http::status::not_found, "snapshot index out of range");
      }
      mesh = s->history[static_cast<std::size_t>(i)];
    } else {
      mesh = s->current();
    }
    return {http::status::ok, "model/obj", save_obj(*mesh)};
  }

  Reply get_view(const std::shared_ptr<Session>& s, const Target& t) {
    const Camera cam = camera_from_query(t);
    const std::string key = camera_to_json(cam).dump();
    std::shared_ptr<const TriangleMesh> mesh;
    {
      std::lock_guard lock(s->mutex);
      const auto it = s->views.find(key);
      if (it != s->views.end()) return {http::status::ok, "image/png", it->second};
      mesh = s->mesh;
    }
    std::string png = encode_normal_png(render_normals(*mesh, cam));
    std::lock_guard lock(s->mutex);
    if (s->mesh == mesh) s->views[key] = png;
    return {http::status::ok, "image/png", std::move(png)};
  }

  Reply enhance(const std::shared_ptr<Session>& s, const Request& req) {
    const json doc = parse_body(req);
    const json view = doc.contains("camera") ? doc.at("camera") : doc.value("view", json::object());
    const Camera cam = camera_from_json(view);
    const EnhanceParams params = EnhanceParams::from_json(doc.value("params", json::object()));
    const std::optional<PixelMask> mask = mask_from(s, doc);
    const std::string kind = doc.value("enhancer", "procedural");

    std::unique_ptr<NormalEnhancer> enhancer;
    if (kind == "procedural") {
      ProceduralOptions o;
      const json p = doc.value("procedural", json::object());
      o.amplitude = p.value("amplitude", o.amplitude);
      o.frequency = p.value("frequency", o.frequency);
      o.seed = p.value("seed", o.seed);
      o.damping = p.value("damping", o.damping);
      enhancer = make_procedural_enhancer(o);
    } else if (kind == "oracle") {
      if (!doc.contains("target_session")) throw DataError("the oracle enhancer needs target_session");
      enhancer = make_oracle_enhancer(*session(doc.at("target_session").get<std::string>())->current());
    } else if (kind == "remote") {
      if (!options.remote_endpoint) throw DataError("no remote enhancer endpoint is configured");
      enhancer = make_remote_enhancer({.endpoint = *options.remote_endpoint});
    } else {
      throw DataError("unknown enhancer " + kind);
    }
    const NormalMap rendered = render_normals(*s->current(), cam);
    const NormalMap out = enhancer->enhance(rendered, params, mask ? &*mask : nullptr, &cam);
    return json_reply({{"normal_png_base64", base64_encode(encode_normal_png(out))},
                       {"camera", camera_to_json(cam)},
                       {"enhancer", enhancer->name()}});
  }

  Reply start_refine(const std::shared_ptr<Session>& s, const Request& req) {
    const json doc = parse_body(req);
    const RefineConfig config = RefineConfig::from_json(doc.value("config", json::object()));
    if (!doc.contains("targets") || !doc.at("targets").is_array() || doc.at("targets").empty()) {
      throw DataError("refine needs a non-empty targets array");
    }
    std::vector<ViewTarget> targets;
    for (std::size_t i = 0; i < doc.at("targets").size(); ++i) {
      const json& t = doc.at("targets")[i];
      try {
        ViewTarget v{camera_from_json(t.at("camera")),
                     decode_normal_png(base64_decode(t.at("normal_png_base64").get<std::string>())), mask_from(s, t),
                     t.value("weight", 1.0)};
        v.validate();
        targets.push_back(std::move(v));
      } catch (const std::exception& e) {
        throw DataError("target " + std::to_string(i) + ": " + e.what());
      }
    }

    auto job = std::make_shared<Job>();
    job->id = ids.next("j");
    job->session_id = s->id;
    std::shared_ptr<const TriangleMesh> start;
    {
      std::lock_guard lock(s->mutex);
      if (s->job) {
        std::lock_guard jl(s->job->mutex);
        if (!s->job->finished) {
          return json_reply({{"error", "session already has an active job"}, {"job_id", s->job->id}},
                            http::status::conflict);
        }
      }
      s->job = job;
      start = s->mesh;
    }
    {
      std::lock_guard lock(state_mutex);
      if (stopping) throw HttpError(http::status::service_unavailable, "service is shutting down");
      jobs[job->id] = job;
      job->thread = std::thread([this, job, s, start, targets = std::move(targets), config] {
        run_job(job, s, *start, targets, config);
      });
    }
    return json_reply({{"job_id", job->id}, {"session_id", s->id}}, http::status::accepted);
  }

  void run_job(const std::shared_ptr<Job>& job, const std::shared_ptr<Session>& s, const TriangleMesh& start,
               const std::vector<ViewTarget>& targets, const RefineConfig& config) {
    int next_step = 0;
    auto event = [&](int step, const char* phase) { return json{{"job_id", job->id}, {"step", step}, {"phase", phase}}; };
    ProgressSink sink;
    sink.on_step = [&](const StepEvent& e) {
      json ev = event(e.step, e.remeshed ? "remeshing" : "optimizing");
      ev["loss"] = e.loss;
      ev["view_losses"] = e.view_losses;
      ev["vertex_count"] = e.vertex_count;
      ev["face_count"] = e.face_count;
      job->push(std::move(ev), false);
      next_step = e.step + 1;
    };
    sink.on_snapshot = [&](int, const TriangleMesh& m) { s->publish(m, options.history); };
    sink.should_cancel = [&] { return job->cancel.load(); };
    try {
      RefineResult r = refine(start, targets, config, sink);
      const bool cancelled = r.report.termination == Termination::cancelled;
      json ev = event(next_step, cancelled ? "cancelled" : "done");
      ev["loss"] = r.report.best_loss;
      ev["view_losses"] = r.report.view_losses;
      ev["vertex_count"] = r.mesh.vertices.size();
      ev["face_count"] = r.mesh.faces.size();
      ev["report"] = r.report.to_json();
      s->publish(std::move(r.mesh), options.history);
      job->push(std::move(ev), true);
    } catch (const std::exception& e) {
      json ev = event(next_step, "error");
      ev["error"] = e.what();
      job->push(std::move(ev), true);
    }
  }

  Reply metrics(const std::shared_ptr<Session>& s, const Target& t) {
    const std::string* against = t.param("against");
    if (!against) throw DataError("metrics needs ?against=<session id>");
    const auto other = session(*against);
    const double samples = t.number("samples", static_cast<double>(kDefaultChamferSamples));
    const double grid = t.number("grid", kDefaultIouResolution);
    const double seed = t.number("seed", 0);
    if (!(samples >= 1 && samples <= 1e7)) throw DataError("samples must lie in [1, 1e7]");
    if (!(grid >= 1 && grid <= 512)) throw DataError("grid must lie in [1, 512]");
    if (!(seed >= 0)) throw DataError("seed must be non-negative");
    const auto report = compute_metrics(*s->current(), *other->current(), static_cast<std::size_t>(samples),
                                        static_cast<int>(grid), static_cast<std::uint64_t>(seed));
    json body = report.to_json();
    body["session_id"] = s->id;
    body["against"] = other->id;
    return json_reply(body);
  }

  Reply put_mask(const std::shared_ptr<Session>& s, const std::string& name, const Request& req) {
    const PixelMask mask = decode_mask_png(req.body());
    std::lock_guard lock(s->mutex);
    s->masks[name] = req.body();
    return json_reply({{"name", name}, {"width", mask.width}, {"height", mask.height}, {"selected", mask.count()}});
  }

  Reply get_mask(const std::shared_ptr<Session>& s, const std::string& name) {
    std::lock_guard lock(s->mutex);
    const auto it = s->masks.find(name);
    if (it == s->masks.end()) throw HttpError(http::status::not_found, "no mask named " + name);
    return {http::status::ok, "image/png", it->second};
  }

  Reply job_status(const std::shared_ptr<Job>& j) {
    std::lock_guard lock(j->mutex);
    return json_reply({{"job_id", j->id},
                       {"session_id", j->session_id},
                       {"phase", j->phase},
                       {"finished", j->finished},
                       {"events", j->frames.size()},
                       {"last", j->frames.empty() ? json(nullptr) : json::parse(j->frames.back())}});
  }

  Reply route(const Request& req) {
    const Target t = parse_target(std::string_view(req.target().data(), req.target().size()));
    const auto& p = t.path;
    const auto method = req.method();
    auto bad_method = [&] { return HttpError(http::status::method_not_allowed, "method not allowed"); };

    if (p.size() == 1 && p[0] == "sessions") {
      if (method != http::verb::post) throw bad_method();
      return create_session(req, t);
    }
    if (p.size() >= 2 && p[0] == "sessions") {
      const auto s = session(p[1]);
      if (p.size() == 2) {
        if (method != http::verb::get) throw bad_method();
        return session_summary(s);
      }
      const std::string& what = p[2];
      if (p.size() == 3 && what == "mesh" && method == http::verb::get) return get_mesh(s, t);
      if (p.size() == 3 && what == "views" && method == http::verb::get) return get_view(s, t);
      if (p.size() == 3 && what == "enhance" && method == http::verb::post) return enhance(s, req);
      if (p.size() == 3 && what == "refine" && method == http::verb::post) return start_refine(s, req);
      if (p.size() == 3 && what == "metrics" && method == http::verb::get) return metrics(s, t);
      if (p.size() == 4 && what == "masks" && method == http::verb::put) return put_mask(s, p[3], req);
      if (p.size() == 4 && what == "masks" && method == http::verb::get) return get_mask(s, p[3]);
    }
    if (p.size() >= 2 && p[0] == "jobs") {
      const auto j = job(p[1]);
      if (p.size() == 2 && method == http::verb::get) return job_status(j);
      if (p.size() == 3 && p[2] == "cancel" && method == http::verb::post) {
        j->cancel = true;
        std::lock_guard lock(j->mutex);
        return json_reply({{"job_id", j->id}, {"phase", j->phase}}, http::status::accepted);
      }
    }
    throw HttpError(http::status::not_found, "no route for " + std::string(req.method_string()) + " " +
                                                 std::string(req.target()));
  }

  Response respond(const Request& req) {
    Reply reply;
    try {
      reply = route(req);
    } catch (const HttpError& e) {
      reply = json_reply({{"error", e.what()}}, e.status);
    } catch (const EnhanceError& e) {
      reply = json_reply({{"error", e.what()}, {"kind", "enhancer"}}, http::status::bad_gateway);
    } catch (const DataError& e) {
      reply = json_reply({{"error", e.what()}, {"kind", "data"}}, http::status::bad_request);
    } catch (const json::exception& e) {
      reply = json_reply({{"error", e.what()}, {"kind", "data"}}, http::status::bad_request);
    } catch (const std::exception& e) {
      reply = json_reply({{"error", e.what()}, {"kind", "internal"}}, http::status::internal_server_error);
    }
    Response res{reply.status, req.version()};
    res.set(http::field::server, "nbrush");
    res.set(http::field::content_type, reply.content_type);
    res.keep_alive(req.keep_alive());
    res.body() = std::move(reply.body);
    res.prepare_payload();
    return res;
  }

  // Connections

  void stream_job(tcp::socket socket, const Request& req) {
    const Target t = parse_target(std::string_view(req.target().data(), req.target().size()));
    std::shared_ptr<Job> j;
    try {
      if (t.path.size() != 3 || t.path[0] != "jobs" || t.path[2] != "stream") {
        throw HttpError(http::status::not_found, "websocket is only served on /jobs/{id}/stream");
      }
      j = job(t.path[1]);
    } catch (const HttpError& e) {
      Response res{e.status, req.version()};
      res.set(http::field::content_type, "application/json");
      res.body() = json{{"error", e.what()}}.dump();
      res.prepare_payload();
      beast::error_code ec;
      http::write(socket, res, ec);
      return;
    }
    {
      std::lock_guard lock(conn_mutex);
      streaming.insert(socket.native_handle());
    }
    websocket::stream<tcp::socket> ws(std::move(socket));
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    std::size_t sent = 0;
    for (;;) {
      std::vector<std::string> batch;
      bool done;
      {
        std::unique_lock lock(j->mutex);
        j->changed.wait(lock, [&] { return j->frames.size() > sent || j->finished; });
        batch.assign(j->frames.begin() + static_cast<std::ptrdiff_t>(sent), j->frames.end());
        done = j->finished;
      }
      for (const std::string& frame : batch) {
        ws.write(asio::buffer(frame), ec);
        if (ec) return;
      }
      sent += batch.size();
      if (done) break;
    }
    ws.close(websocket::close_code::normal, ec);
  }

  void serve_connection(tcp::socket socket) {
    beast::error_code ec;
    beast::flat_buffer buffer;
    for (;;) {
      http::request_parser<http::string_body> parser;
      parser.body_limit(512u << 20);
      http::read(socket, buffer, parser, ec);
      if (ec) break;
      Request req = parser.release();
      if (websocket::is_upgrade(req)) {
        stream_job(std::move(socket), req);
        return;
      }
      Response res = respond(req);
      http::write(socket, res, ec);
      if (ec || res.need_eof()) break;
    }
    socket.shutdown(tcp::socket::shutdown_send, ec);
  }

  void accept_loop() {
    for (;;) {
      tcp::socket socket(io);
      beast::error_code ec;
      acceptor.accept(socket, ec);
      if (stopping) break;
      if (ec) continue;
      const int fd = socket.native_handle();
      {
        std::lock_guard lock(conn_mutex);
        open_sockets.insert(fd);
        ++live_connections;
      }
      std::thread([this, fd, socket = std::move(socket)]() mutable {
        serve_connection(std::move(socket));
        std::lock_guard lock(conn_mutex);
        open_sockets.erase(fd);
        streaming.erase(fd);
        --live_connections;
        conn_done.notify_all();
      }).detach();
    }
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

unsigned short Service::start() {
  Impl& m = *impl_;
  if (m.started) throw Error("service already started");
  beast::error_code ec;
  const auto address = asio::ip::make_address(m.options.address, ec);
  if (ec) throw DataError("bad bind address " + m.options.address);
  const tcp::endpoint endpoint(address, m.options.port);
  m.acceptor.open(endpoint.protocol(), ec);
  if (!ec) m.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) m.acceptor.bind(endpoint, ec);
  if (!ec) m.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error("cannot bind " + m.options.address + ":" + std::to_string(m.options.port) + ": " + ec.message());
  }
  m.started = true;
  m.accept_thread = std::thread([&m] { m.accept_loop(); });
  return m.acceptor.local_endpoint().port();
}

void Service::stop() {
  Impl& m = *impl_;
  if (!m.started || m.stopping.exchange(true)) return;
  ::shutdown(m.acceptor.native_handle(), SHUT_RDWR);
  m.accept_thread.join();
  beast::error_code ec;
  m.acceptor.close(ec);

  std::vector<std::shared_ptr<Job>> jobs;
  {
    std::lock_guard lock(m.state_mutex);
    for (auto& [id, j] : m.jobs) jobs.push_back(j);
  }
  for (auto& j : jobs) j->cancel = true;
  for (auto& j : jobs) {
    if (j->thread.joinable()) j->thread.join();
  }
  {
    // Every job has ended, so streams finish on their own once their last
    // frames are out. Idle HTTP connections are cut right away.
    std::unique_lock lock(m.conn_mutex);
    for (int fd : m.open_sockets) {
      if (!m.streaming.count(fd)) ::shutdown(fd, SHUT_RDWR);
    }
    m.conn_done.wait_for(lock, std::chrono::seconds(2), [&] { return m.live_connections == 0; });
    for (int fd : m.open_sockets) ::shutdown(fd, SHUT_RDWR);
    m.conn_done.wait(lock, [&] { return m.live_connections == 0; });
  }
  {
    std::lock_guard lock(m.state_mutex);
    m.stop_called = true;
  }
  m.stopped.notify_all();
}

void Service::wait() {
  std::unique_lock lock(impl_->state_mutex);
  impl_->stopped.wait(lock, [&] { return impl_->stop_called; });
}

}  // namespace nbrush
