#include "doctest.h"

#include "nbrush/error.hpp"
#include "nbrush/render.hpp"
#include "nbrush/service.hpp"
#include "service_client.hpp"

using namespace nbrush;
using namespace nbrush::testing;

namespace {

struct Running {
  Service service{ServiceOptions{.port = 0}};
  unsigned short port = service.start();
  httplib::Client client{"127.0.0.1", port};

  std::string create(const std::string& obj) {
    const auto r = client.Post("/sessions", obj, "text/plain");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return json::parse(r->body)["session_id"];
  }
};

json self_targets(const TriangleMesh& mesh, int res) {
  json targets = json::array();
  for (const Camera& cam : orbit_view_set8(2.0, Orthographic{}, res, res)) {
    targets.push_back({{"camera", camera_to_json(cam)},
                       {"normal_png_base64", base64_encode(encode_normal_png(render_normals(mesh, cam)))}});
  }
  return targets;
}

}  // namespace

TEST_CASE("scripted demo scenario") {
  Running r;
  const auto result = run_service_scenario(r.port);
  INFO(result.detail);
  CHECK(result.ok);
}

TEST_CASE("sessions and meshes") {
  Running r;
  const auto sphere = make_icosphere(2, 0.4);
  const std::string id = r.create(save_obj(sphere));

  const auto mesh = r.client.Get("/sessions/" + id + "/mesh");
  REQUIRE(mesh);
  CHECK(load_obj(mesh->body).faces == sphere.faces);

  const auto summary = r.client.Get("/sessions/" + id);
  REQUIRE(summary);
  CHECK(json::parse(summary->body)["vertices"] == sphere.vertices.size());
  CHECK(json::parse(summary->body)["job"].is_null());

  const auto scene = r.client.Post("/sessions", R"({"resolution": 24, "field": {"type": "sphere", "radius": 0.3}})",
                                   "application/json");
  REQUIRE(scene);
  CHECK(scene->status == 201);

  CHECK(r.client.Post("/sessions", "v 0 0 0\nf 1 2 3\n", "text/plain")->status == 400);
  CHECK(r.client.Get("/sessions/nope/mesh")->status == 404);
  CHECK(r.client.Get("/sessions/" + id + "/mesh?snapshot=3")->status == 404);
  CHECK(r.client.Get("/sessions/" + id + "/views?elevation=90")->status == 400);
  CHECK(r.client.Get("/sessions/" + id + "/views?width=abc")->status == 400);
  CHECK(r.client.Delete("/sessions/" + id)->status == 405);
  CHECK(r.client.Get("/elsewhere")->status == 404);
}

TEST_CASE("views match the renderer") {
  Running r;
  const auto sphere = make_icosphere(3, 0.4);
  const std::string id = r.create(save_obj(sphere));
  const auto view = r.client.Get("/sessions/" + id + "/views?azimuth=30&elevation=10&radius=2&width=40&height=32");
  REQUIRE(view);
  REQUIRE(view->status == 200);
  // The service works on the OBJ round trip of the mesh.
  const auto cam = camera_from_orbit(30, 10, 2, Orthographic{}, 40, 32);
  CHECK(decode_normal_png(view->body) == quantize_normals(render_normals(load_obj(save_obj(sphere)), cam)));
  CHECK(r.client.Get("/sessions/" + id + "/views?azimuth=30&elevation=10&radius=2&width=40&height=32")->body ==
        view->body);
}

TEST_CASE("masks round-trip bit-exactly") {
  Running r;
  const std::string id = r.create(save_obj(make_icosphere(1, 0.4)));
  PixelMask mask(17, 9);
  for (std::size_t i = 0; i < mask.values.size(); i += 3) mask.values[i] = 1;
  const std::string png = encode_mask_png(mask);
  const auto put = r.client.Put("/sessions/" + id + "/masks/left%20side", png, "image/png");
  REQUIRE(put);
  CHECK(put->status == 200);
  CHECK(json::parse(put->body)["selected"] == mask.count());
  const auto get = r.client.Get("/sessions/" + id + "/masks/left%20side");
  REQUIRE(get);
  CHECK(get->body == png);
  CHECK(r.client.Get("/sessions/" + id + "/masks/other")->status == 404);
  CHECK(r.client.Put("/sessions/" + id + "/masks/bad", "not a png", "image/png")->status == 400);
}

TEST_CASE("enhance endpoint") {
  Running r;
  const auto sphere = make_icosphere(3, 0.4);
  const std::string id = r.create(save_obj(sphere));
  const std::string bumpy_id = r.create(save_obj(make_icosphere(4, 0.42)));
  const json camera = {{"azimuth", 45}, {"elevation", 20}, {"width", 48}, {"height", 48}};

  SUBCASE("oracle against a target session") {
    const json req = {{"camera", camera}, {"enhancer", "oracle"}, {"target_session", bumpy_id}};
    const auto res = r.client.Post("/sessions/" + id + "/enhance", req.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto out = decode_normal_png(base64_decode(json::parse(res->body)["normal_png_base64"].get<std::string>()));
    CHECK(out.width == 48);
  }
  SUBCASE("a stored mask") {
    const PixelMask none(48, 48);
    r.client.Put("/sessions/" + id + "/masks/none", encode_mask_png(none), "image/png");
    const json req = {{"camera", camera}, {"enhancer", "procedural"}, {"mask", "none"}};
    const auto res = r.client.Post("/sessions/" + id + "/enhance", req.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto view = r.client.Get("/sessions/" + id + "/views?azimuth=45&elevation=20&width=48&height=48");
    CHECK(base64_decode(json::parse(res->body)["normal_png_base64"].get<std::string>()) == view->body);
  }
  SUBCASE("errors") {
    auto post = [&](const json& req) {
      return r.client.Post("/sessions/" + id + "/enhance", req.dump(), "application/json")->status;
    };
    CHECK(post({{"camera", camera}, {"enhancer", "oracle"}}) == 400);
    CHECK(post({{"camera", camera}, {"enhancer", "remote"}}) == 400);
    CHECK(post({{"camera", camera}, {"enhancer", "magic"}}) == 400);
    CHECK(post({{"camera", camera}, {"params", {{"control_scale", 2}}}}) == 400);
    CHECK(r.client.Post("/sessions/" + id + "/enhance", "{", "application/json")->status == 400);
  }
}

TEST_CASE("refine jobs") {
  Running r;
  const auto sphere = make_icosphere(2, 0.4);
  const std::string id = r.create(save_obj(sphere));
  const auto targets = self_targets(load_obj(save_obj(sphere)), 48);

  SUBCASE("self target stays put and streams in order") {
    const json req = {{"config", {{"steps", 30}, {"snapshot_interval", 10}, {"remesh", {{"enabled", false}}}}},
                      {"targets", targets}};
    const auto res = r.client.Post("/sessions/" + id + "/refine", req.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 202);
    const std::string job = json::parse(res->body)["job_id"];
    const auto frames = read_stream(r.port, job);
    std::string why;
    CHECK_MESSAGE(well_ordered(frames, &why), why);
    REQUIRE(frames.size() == 31);
    CHECK(frames.back()["phase"] == "done");
    CHECK(frames.back()["step"] == 30);
    // Targets went through 16-bit PNG: each channel is off by at most 1/65535.
    for (double l : frames.back()["view_losses"]) CHECK(l <= 3.0 / 65535.0);
    CHECK(frames.back()["report"]["steps_executed"] == 30);

    // A late subscriber gets the same replay.
    CHECK(read_stream(r.port, job) == frames);
    const auto status = json::parse(r.client.Get("/jobs/" + job)->body);
    CHECK(status["phase"] == "done");
    CHECK(status["finished"] == true);
    // Snapshots at 10, 20, 30 plus the result, on top of the upload.
    CHECK(json::parse(r.client.Get("/sessions/" + id)->body)["snapshots"] == 5);

    // The session is free again.
    const auto again = r.client.Post("/sessions/" + id + "/refine", req.dump(), "application/json");
    REQUIRE(again);
    CHECK(again->status == 202);
    read_stream(r.port, json::parse(again->body)["job_id"]);
  }
  SUBCASE("cancel") {
    const json req = {{"config", {{"steps", 100000}, {"remesh", {{"enabled", false}}}}}, {"targets", targets}};
    const auto res = r.client.Post("/sessions/" + id + "/refine", req.dump(), "application/json");
    REQUIRE(res);
    const std::string job = json::parse(res->body)["job_id"];
    CHECK(r.client.Post("/sessions/" + id + "/refine", req.dump(), "application/json")->status == 409);
    CHECK(r.client.Post("/jobs/" + job + "/cancel", "", "text/plain")->status == 202);
    const auto frames = read_stream(r.port, job);
    std::string why;
    CHECK_MESSAGE(well_ordered(frames, &why), why);
    CHECK(frames.back()["phase"] == "cancelled");
    CHECK(load_obj(r.client.Get("/sessions/" + id + "/mesh")->body).vertices.size() == sphere.vertices.size());
    CHECK(r.client.Post("/jobs/" + job + "/cancel", "", "text/plain")->status == 202);
  }
  SUBCASE("bad requests") {
    auto post = [&](const json& req) {
      return r.client.Post("/sessions/" + id + "/refine", req.dump(), "application/json")->status;
    };
    CHECK(post({{"targets", json::array()}}) == 400);
    CHECK(post({{"config", {{"steps", 0}}}, {"targets", targets}}) == 400);
    json wrong = targets;
    wrong[5]["camera"]["width"] = 64;
    const auto res = r.client.Post("/sessions/" + id + "/refine", json{{"targets", wrong}}.dump(), "application/json");
    CHECK(res->status == 400);
    CHECK(res->body.find("target 5") != std::string::npos);
    CHECK(r.client.Post("/jobs/nope/cancel", "", "text/plain")->status == 404);
  }
  SUBCASE("stream of an unknown job") { CHECK_THROWS(read_stream(r.port, "nope")); }
}

TEST_CASE("metrics endpoint") {
  Running r;
  const std::string a = r.create(save_obj(make_icosphere(2, 0.4)));
  const std::string b = r.create(save_obj(make_icosphere(2, 0.4)));
  const auto res = r.client.Get("/sessions/" + a + "/metrics?against=" + b + "&samples=5000&grid=16");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const json m = json::parse(res->body);
  CHECK(m["chamfer"] == 0.0);
  CHECK(m["volume_iou"] == 1.0);
  CHECK(r.client.Get("/sessions/" + a + "/metrics")->status == 400);
  CHECK(r.client.Get("/sessions/" + a + "/metrics?against=zzz")->status == 404);
}

TEST_CASE("shutdown cancels running jobs") {
  auto service = std::make_unique<Service>(ServiceOptions{.port = 0});
  const auto port = service->start();
  httplib::Client client("127.0.0.1", port);
  const auto sphere = make_icosphere(2, 0.4);
  const std::string id = json::parse(client.Post("/sessions", save_obj(sphere), "text/plain")->body)["session_id"];
  const json req = {{"config", {{"steps", 100000}, {"remesh", {{"enabled", false}}}}},
                    {"targets", self_targets(load_obj(save_obj(sphere)), 32)}};
  const std::string job = json::parse(client.Post("/sessions/" + id + "/refine", req.dump(), "application/json")->body)["job_id"];
  std::vector<json> frames;
  std::thread reader([&] { frames = read_stream(port, job); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service->stop();
  reader.join();
  REQUIRE_FALSE(frames.empty());
  CHECK(frames.back()["phase"] == "cancelled");
  CHECK_FALSE(client.Get("/sessions/" + id));
}

TEST_CASE("bind failure") {
  Service first(ServiceOptions{.port = 0});
  const auto port = first.start();
  Service second(ServiceOptions{.port = port});
  CHECK_THROWS_AS(second.start(), nbrush::Error);
}
