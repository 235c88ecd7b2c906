#pragma once

#include "nbrush/camera.hpp"
#include "nbrush/error.hpp"
#include "nbrush/normal_map.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

namespace nbrush {

struct EnhanceParams {
  double cfg_scale = 20.0;
  double control_scale = 0.8;
  std::string prompt;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static EnhanceParams from_json(const nlohmann::json& doc);
};

// Failure talking to a remote enhancer.
class EnhanceError : public Error {
 public:
  enum class Kind { transport, protocol, backend };
  EnhanceError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Turns a rendered normal map into a more detailed one. Output has the input's
// size and coverage, unit normals on covered pixels and zeros elsewhere. With a
// mask, pixels outside it come back exactly as they went in. `camera` is the
// view that produced `rendered`; only some enhancers need it.
class NormalEnhancer {
 public:
  virtual ~NormalEnhancer() = default;
  virtual std::string name() const = 0;
  virtual NormalMap enhance(const NormalMap& rendered, const EnhanceParams& params, const PixelMask* mask = nullptr,
                            const Camera* camera = nullptr) const = 0;
};

// Puts input pixels back outside the mask and forces the input coverage.
// Pixels covered in the input but not in `proposed` keep their input value.
NormalMap apply_enhancer_contract(const NormalMap& rendered, const NormalMap& proposed, const PixelMask* mask);

// Test oracle: the target mesh rendered from the same camera.
std::unique_ptr<NormalEnhancer> make_oracle_enhancer(TriangleMesh target);

// Seeded tangent-plane noise of strength amplitude * (1 - control_scale * damping).
struct ProceduralOptions {
  double amplitude = 0.2;
  double frequency = 8.0;
  std::uint64_t seed = 0;
  double damping = 1.0;
};
std::unique_ptr<NormalEnhancer> make_procedural_enhancer(const ProceduralOptions& options);

// HTTP client for an external backend; see README for the wire format.
// At most max_in_flight requests per endpoint run at once across the process.
struct RemoteOptions {
  std::string endpoint;  // e.g. "http://127.0.0.1:9000"
  std::chrono::milliseconds timeout{120000};
  int max_in_flight = 2;
};
std::unique_ptr<NormalEnhancer> make_remote_enhancer(const RemoteOptions& options);

}  // namespace nbrush
