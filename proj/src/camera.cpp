#include "nbrush/camera.hpp"

#include "nbrush/error.hpp"

#include <cmath>
#include <numbers>

namespace nbrush {

Camera::Camera(Vec3 position, Vec3 target, Vec3 up, Projection projection, int width, int height)
    : position_(std::move(position)),
      target_(std::move(target)),
      up_(std::move(up)),
      projection_(projection),
      width_(width),
      height_(height) {
  if (!position_.allFinite() || !target_.allFinite() || !up_.allFinite()) {
    throw DataError("camera vectors must be finite");
  }
  if ((target_ - position_).norm() <= 0.0) throw DataError("camera position equals its target");
  if (width_ < 8 || height_ < 8) throw DataError("camera resolution must be at least 8x8");
  forward_ = (target_ - position_).normalized();
  const Vec3 side = forward_.cross(up_);
  if (side.norm() < 1e-9 * std::max(1.0, up_.norm())) throw DataError("camera up vector is parallel to the view");
  right_ = side.normalized();
  true_up_ = right_.cross(forward_);

  if (const auto* ortho = std::get_if<Orthographic>(&projection_)) {
    if (!(ortho->half_height > 0.0)) throw DataError("orthographic half height must be positive");
    pixels_per_unit_ = height_ / (2.0 * ortho->half_height);
  } else {
    const double fov = std::get<Perspective>(projection_).fov_deg;
    if (!(fov > 0.0 && fov < 180.0)) throw DataError("perspective fov must be in (0, 180) degrees");
    pixels_per_unit_ = height_ / (2.0 * std::tan(0.5 * fov * std::numbers::pi / 180.0));
  }
}

Camera::Projected Camera::project(const Vec3& p) const {
  const Vec3 d = p - position_;
  const double qx = right_.dot(d);
  const double qy = true_up_.dot(d);
  const double w = forward_.dot(d);
  Projected out;
  out.depth = w;
  out.ddepth = forward_;
  const double k = pixels_per_unit_;
  if (orthographic()) {
    out.sx = k * qx + 0.5 * width_;
    out.sy = k * qy + 0.5 * height_;
    out.dsx = k * right_;
    out.dsy = k * true_up_;
  } else {
    out.sx = k * qx / w + 0.5 * width_;
    out.sy = k * qy / w + 0.5 * height_;
    out.dsx = k * (right_ * w - qx * forward_) / (w * w);
    out.dsy = k * (true_up_ * w - qy * forward_) / (w * w);
  }
  return out;
}

Camera camera_from_orbit(double azimuth_deg, double elevation_deg, double radius, Projection projection,
                         int width, int height) {
  if (!(radius > 0.0)) throw DataError("orbit radius must be positive");
  if (!(std::abs(elevation_deg) < 90.0)) throw DataError("orbit elevation must be strictly within (-90, 90)");
  const double a = azimuth_deg * std::numbers::pi / 180.0;
  const double e = elevation_deg * std::numbers::pi / 180.0;
  const Vec3 position = radius * Vec3(std::cos(e) * std::sin(a), std::sin(e), std::cos(e) * std::cos(a));
  return Camera(position, Vec3::Zero(), Vec3::UnitY(), projection, width, height);
}

std::array<Camera, 4> orthogonal_view_set(double radius, Projection projection, int width, int height) {
  return {camera_from_orbit(0, 0, radius, projection, width, height),
          camera_from_orbit(90, 0, radius, projection, width, height),
          camera_from_orbit(180, 0, radius, projection, width, height),
          camera_from_orbit(270, 0, radius, projection, width, height)};
}

std::vector<Camera> orbit_view_set8(double radius, Projection projection, int width, int height) {
  std::vector<Camera> cams;
  for (int k = 0; k < 8; ++k) {
    const double elevation = k % 2 == 0 ? 30.0 : -30.0;
    cams.push_back(camera_from_orbit(45.0 * k, elevation, radius, projection, width, height));
  }
  return cams;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_of(const nlohmann::json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw DataError(std::string("camera: ") + key + " must be a 3-element array");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

}  // namespace

nlohmann::json camera_to_json(const Camera& camera) {
  nlohmann::json projection;
  if (const auto* o = std::get_if<Orthographic>(&camera.projection())) {
    projection = {{"type", "orthographic"}, {"half_height", o->half_height}};
  } else {
    projection = {{"type", "perspective"}, {"fov_deg", std::get<Perspective>(camera.projection()).fov_deg}};
  }
  return {{"position", vec_json(camera.position())},
          {"target", vec_json(camera.target())},
          {"up", vec_json(camera.up_hint())},
          {"width", camera.width()},
          {"height", camera.height()},
          {"projection", projection}};
}

Camera camera_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw DataError("camera must be a JSON object");
  try {
    const int width = doc.value("width", kDefaultResolution);
    const int height = doc.value("height", kDefaultResolution);
    Projection projection = Orthographic{};
    if (doc.contains("projection")) {
      const auto& p = doc.at("projection");
      const std::string type = p.value("type", "orthographic");
      if (type == "orthographic") {
        projection = Orthographic{p.value("half_height", Orthographic{}.half_height)};
      } else if (type == "perspective") {
        projection = Perspective{p.value("fov_deg", Perspective{}.fov_deg)};
      } else {
        throw DataError("camera: unknown projection \"" + type + "\"");
      }
    }
    if (doc.contains("azimuth") || doc.contains("elevation")) {
      return camera_from_orbit(doc.value("azimuth", 0.0), doc.value("elevation", 0.0),
                               doc.value("radius", kDefaultOrbitRadius), projection, width, height);
    }
    return Camera(vec_of(doc, "position"), vec_of(doc, "target"), vec_of(doc, "up"), projection, width, height);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("camera: ") + e.what());
  }
}

}  // namespace nbrush
