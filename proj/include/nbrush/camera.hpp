#pragma once

#include "nbrush/mesh.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <variant>

namespace nbrush {

struct Orthographic {
  double half_height = 0.6;  // object units visible above the view axis
};

struct Perspective {
  double fov_deg = 40.0;  // vertical field of view
};

using Projection = std::variant<Orthographic, Perspective>;

inline constexpr double kDefaultOrbitRadius = 2.0;
inline constexpr int kDefaultResolution = 512;

// Pinhole or orthographic camera. Camera space is right-handed with x right,
// y up and the camera looking down -z, so a surface facing the camera has
// normal (0, 0, 1). Screen space is in pixels with y pointing up; the centre of
// pixel (column x, row y counted from the top) is (x + 0.5, height - y - 0.5).
class Camera {
 public:
  Camera(Vec3 position, Vec3 target, Vec3 up, Projection projection, int width, int height);

  const Vec3& position() const { return position_; }
  const Vec3& target() const { return target_; }
  const Vec3& up_hint() const { return up_; }
  const Projection& projection() const { return projection_; }
  int width() const { return width_; }
  int height() const { return height_; }
  bool orthographic() const { return std::holds_alternative<Orthographic>(projection_); }

  const Vec3& right() const { return right_; }
  const Vec3& up() const { return true_up_; }
  const Vec3& forward() const { return forward_; }

  // World direction to camera space.
  Vec3 rotate(const Vec3& d) const { return Vec3(right_.dot(d), true_up_.dot(d), -forward_.dot(d)); }
  // Camera-space direction back to world.
  Vec3 unrotate(const Vec3& d) const { return d.x() * right_ + d.y() * true_up_ - d.z() * forward_; }

  // Distance along the view direction.
  double depth(const Vec3& p) const { return forward_.dot(p - position_); }

  struct Projected {
    double sx = 0.0, sy = 0.0, depth = 0.0;
    // Gradients of sx, sy and depth with respect to the world position.
    Vec3 dsx, dsy, ddepth;
  };
  Projected project(const Vec3& p) const;

  Eigen::Vector2d pixel_center(int x, int y) const { return {x + 0.5, height_ - y - 0.5}; }

 private:
  Vec3 position_, target_, up_;
  Projection projection_;
  int width_, height_;
  Vec3 right_, true_up_, forward_;
  double pixels_per_unit_ = 1.0;  // orthographic: H / (2 half_height); perspective: H / (2 tan(fov/2))
};

// Orbit pose around the origin: position = r (cos e sin a, sin e, cos e cos a),
// looking at the origin with +y up. Angles in degrees.
Camera camera_from_orbit(double azimuth_deg, double elevation_deg, double radius,
                         Projection projection = Orthographic{}, int width = kDefaultResolution,
                         int height = kDefaultResolution);

// Azimuths 0, 90, 180, 270 at zero elevation.
std::array<Camera, 4> orthogonal_view_set(double radius, Projection projection = Orthographic{},
                                          int width = kDefaultResolution, int height = kDefaultResolution);

// Eight views: azimuths 0, 90, 180, 270 at +30 degrees elevation and 45, 135,
// 225, 315 at -30 degrees.
std::vector<Camera> orbit_view_set8(double radius, Projection projection, int width, int height);


// {"position": [x, y, z], "target": [x, y, z], "up": [x, y, z],
//  "width": 512, "height": 512,
//  "projection": {"type": "orthographic", "half_height": 0.6}
//             or {"type": "perspective", "fov_deg": 40}}
nlohmann::json camera_to_json(const Camera& camera);
// Also accepts an orbit pose, {"azimuth", "elevation", "radius"} in place of
// position/target/up. Missing width/height default to 512, a missing
// projection to orthographic. Throws DataError.
Camera camera_from_json(const nlohmann::json& doc);

}  // namespace nbrush
