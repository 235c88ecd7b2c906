#include "nbrush/enhance.hpp"

#include "nbrush/base64.hpp"
#include "nbrush/fields.hpp"
#include "nbrush/render.hpp"

#include <httplib.h>

#include <cmath>
#include <map>
#include <mutex>
#include <semaphore>

namespace nbrush {

using nlohmann::json;

void EnhanceParams::validate() const {
  if (!(control_scale >= 0.0 && control_scale <= 1.0)) throw DataError("control_scale must lie in [0, 1]");
  if (!(cfg_scale >= 0.0) || !std::isfinite(cfg_scale)) throw DataError("cfg_scale must be finite and >= 0");
}

json EnhanceParams::to_json() const {
  return {{"cfg_scale", cfg_scale}, {"control_scale", control_scale}, {"prompt", prompt}, {"seed", seed}};
}

EnhanceParams EnhanceParams::from_json(const json& doc) {
  if (!doc.is_object()) throw DataError("enhance params must be a JSON object");
  EnhanceParams p;
  try {
    p.cfg_scale = doc.value("cfg_scale", p.cfg_scale);
    p.control_scale = doc.value("control_scale", p.control_scale);
    p.prompt = doc.value("prompt", p.prompt);
    p.seed = doc.value("seed", p.seed);
  } catch (const json::exception& e) {
    throw DataError(std::string("enhance params: ") + e.what());
  }
  p.validate();
  return p;
}

NormalMap apply_enhancer_contract(const NormalMap& rendered, const NormalMap& proposed, const PixelMask* mask) {
  if (!rendered.same_size(proposed)) throw DataError("enhanced map size differs from the input");
  if (mask && (mask->width != rendered.width || mask->height != rendered.height)) {
    throw DataError("inpaint mask size differs from the input");
  }
  NormalMap out(rendered.width, rendered.height);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    if (!rendered.covered(i)) continue;
    out.coverage[i] = 1;
    const bool editable = !mask || (*mask)[i];
    out.normals[i] = editable && proposed.covered(i) ? proposed.normals[i] : rendered.normals[i];
  }
  return out;
}

namespace {

class OracleEnhancer final : public NormalEnhancer {
 public:
  explicit OracleEnhancer(TriangleMesh target) : renderer_(std::move(target)) {}
  std::string name() const override { return "oracle"; }

  NormalMap enhance(const NormalMap& rendered, const EnhanceParams& params, const PixelMask* mask,
                    const Camera* camera) const override {
    params.validate();
    if (!camera) throw DataError("the oracle enhancer needs the camera of the rendered view");
    if (camera->width() != rendered.width || camera->height() != rendered.height) {
      throw DataError("camera resolution differs from the rendered map");
    }
    return apply_enhancer_contract(rendered, renderer_.render(*camera).map, mask);
  }

 private:
  NormalRenderer renderer_;
};

class ProceduralEnhancer final : public NormalEnhancer {
 public:
  explicit ProceduralEnhancer(const ProceduralOptions& o) : options_(o) {
    if (!(o.amplitude >= 0.0) || !std::isfinite(o.amplitude)) throw DataError("amplitude must be >= 0");
    if (!(o.frequency > 0.0) || !std::isfinite(o.frequency)) throw DataError("frequency must be > 0");
  }
  std::string name() const override { return "procedural"; }

  NormalMap enhance(const NormalMap& rendered, const EnhanceParams& params, const PixelMask* mask,
                    const Camera*) const override {
    params.validate();
    const double strength = options_.amplitude * (1.0 - params.control_scale * options_.damping);
    if (!(strength > 0.0)) return apply_enhancer_contract(rendered, rendered, mask);
    const std::uint64_t seed = options_.seed ^ (params.seed * 0x9e3779b97f4a7c15ULL);
    NormalMap proposed = rendered;
    for (int y = 0; y < rendered.height; ++y) {
      for (int x = 0; x < rendered.width; ++x) {
        const std::size_t i = rendered.index(x, y);
        if (!rendered.covered(i)) continue;
        const Vec3 p(options_.frequency * (x + 0.5) / rendered.width, options_.frequency * (y + 0.5) / rendered.height,
                     0.0);
        const Vec3 t(value_noise(p, seed), value_noise(p, seed + 1), value_noise(p, seed + 2));
        const Vec3& n = rendered.normals[i];
        const Vec3 perturbed = n + strength * (t - n * n.dot(t));
        const double len = perturbed.norm();
        if (len > 0.0) proposed.normals[i] = perturbed / len;
      }
    }
    return apply_enhancer_contract(rendered, proposed, mask);
  }

 private:
  ProceduralOptions options_;
};

// Process-wide request limit per endpoint.
std::shared_ptr<std::counting_semaphore<>> endpoint_limiter(const std::string& endpoint, int limit) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<std::counting_semaphore<>>> limiters;
  std::lock_guard lock(mutex);
  auto& slot = limiters[endpoint];
  if (!slot) slot = std::make_shared<std::counting_semaphore<>>(std::max(1, limit));
  return slot;
}

class RemoteEnhancer final : public NormalEnhancer {
 public:
  explicit RemoteEnhancer(const RemoteOptions& o) : options_(o) {
    const auto scheme = o.endpoint.find("://");
    if (o.endpoint.empty() || scheme == std::string::npos) throw DataError("remote endpoint must be an http:// URL");
    const auto slash = o.endpoint.find('/', scheme + 3);
    base_ = o.endpoint.substr(0, slash);
    path_ = (slash == std::string::npos ? "" : o.endpoint.substr(slash));
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    path_ += "/enhance";
    limiter_ = endpoint_limiter(base_ + path_, o.max_in_flight);
  }
  std::string name() const override { return "remote"; }

  NormalMap enhance(const NormalMap& rendered, const EnhanceParams& params, const PixelMask* mask,
                    const Camera*) const override {
    params.validate();
    json request = params.to_json();
    request["width"] = rendered.width;
    request["height"] = rendered.height;
    request["normal_png_base64"] = base64_encode(encode_normal_png(rendered));
    if (mask) request["mask_png_base64"] = base64_encode(encode_mask_png(*mask));

    httplib::Result res;
    {
      limiter_->acquire();
      struct Release {
        std::counting_semaphore<>* s;
        ~Release() { s->release(); }
      } release{limiter_.get()};
      httplib::Client client(base_);
      const auto us = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout).count();
      client.set_connection_timeout(0, us);
      client.set_read_timeout(0, us);
      client.set_write_timeout(0, us);
      res = client.Post(path_, request.dump(), "application/json");
    }
    using Kind = EnhanceError::Kind;
    if (!res) throw EnhanceError(Kind::transport, "enhancer request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
      throw EnhanceError(Kind::backend,
                         "enhancer returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    NormalMap decoded;
    try {
      const json body = json::parse(res->body);
      decoded = decode_normal_png(base64_decode(body.at("normal_png_base64").get<std::string>()));
    } catch (const std::exception& e) {
      throw EnhanceError(Kind::protocol, std::string("malformed enhancer response: ") + e.what());
    }
    if (!decoded.same_size(rendered)) {
      throw EnhanceError(Kind::protocol, "enhancer returned " + std::to_string(decoded.width) + "x" +
                                             std::to_string(decoded.height) + " for a " +
                                             std::to_string(rendered.width) + "x" + std::to_string(rendered.height) +
                                             " request");
    }
    // Pixels the backend left at the wire value of the input come back exactly
    // as the input; everything else is renormalized.
    const NormalMap sent = quantize_normals(rendered);
    NormalMap proposed = decoded;
    for (std::size_t i = 0; i < proposed.pixel_count(); ++i) {
      if (!decoded.covered(i) || !rendered.covered(i)) continue;
      if (decoded.normals[i] == sent.normals[i]) {
        proposed.normals[i] = rendered.normals[i];
        continue;
      }
      const double len = decoded.normals[i].norm();
      if (!std::isfinite(len) || len < 1e-6) {
        throw EnhanceError(Kind::protocol, "enhancer returned a zero-length normal at pixel " + std::to_string(i));
      }
      proposed.normals[i] = decoded.normals[i] / len;
    }
    return apply_enhancer_contract(rendered, proposed, mask);
  }

 private:
  RemoteOptions options_;
  std::string base_, path_;
  std::shared_ptr<std::counting_semaphore<>> limiter_;
};

}  // namespace

std::unique_ptr<NormalEnhancer> make_oracle_enhancer(TriangleMesh target) {
  return std::make_unique<OracleEnhancer>(std::move(target));
}

std::unique_ptr<NormalEnhancer> make_procedural_enhancer(const ProceduralOptions& options) {
  return std::make_unique<ProceduralEnhancer>(options);
}

std::unique_ptr<NormalEnhancer> make_remote_enhancer(const RemoteOptions& options) {
  return std::make_unique<RemoteEnhancer>(options);
}

}  // namespace nbrush
