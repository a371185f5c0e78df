#include "glados/clients.hpp"
#include "glados/error.hpp"
#include "glados/wire.hpp"

#include <httplib.h>

namespace glados {

namespace {

using nlohmann::json;

// Splits "http://host:port/prefix" into the httplib origin and path prefix.
struct Endpoint {
  std::string origin;
  std::string prefix;
};

Endpoint parse_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, slash);
  e.prefix = slash == std::string::npos ? "" : url.substr(slash);
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

class Connection {
 public:
  explicit Connection(const std::string& url) : endpoint_(parse_url(url)) {}

  // POSTs a JSON request; returns the raw body of a 200 response.
  std::string post(const std::string& route, const json& body, std::string* content_type = nullptr) {
    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(10);
    client.set_read_timeout(600);
    client.set_write_timeout(60);
    const auto res = client.Post(endpoint_.prefix + route, body.dump(), "application/json");
    if (!res) {
      throw ClientError(stage_of(route), "request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      std::string detail = "HTTP " + std::to_string(res->status);
      try {
        const auto err = json::parse(res->body);
        detail += " " + err.value("code", std::string()) + ": " + err.value("message", std::string());
      } catch (const json::exception&) {
        detail += " " + res->body.substr(0, 200);
      }
      throw ClientError(stage_of(route), detail);
    }
    if (content_type) *content_type = res->get_header_value("Content-Type");
    return res->body;
  }

  json post_json(const std::string& route, const json& body) {
    const auto text = post(route, body);
    try {
      auto out = json::parse(text);
      if (out.value("v", 0) != wire::kProtocolVersion) {
        throw MalformedFile("unsupported protocol version in response");
      }
      return out;
    } catch (const json::exception& e) {
      throw MalformedFile(std::string("response is not valid JSON: ") + e.what());
    }
  }

 private:
  static std::string stage_of(const std::string& route) {
    return route.substr(route.rfind('/') + 1);
  }

  Endpoint endpoint_;
};

class RemotePromptEngine final : public PromptEngine {
 public:
  explicit RemotePromptEngine(const std::string& url) : conn_(url) {}
  std::string prompt(const Image& i1, const Image& i2, const std::string& meta_prompt,
                     std::uint64_t seed) override {
    json req = wire::request(seed);
    req["image1"] = wire::encode_image(i1);
    req["image2"] = wire::encode_image(i2);
    req["meta_prompt"] = meta_prompt;
    return conn_.post_json("/v1/prompt", req).at("prompt").get<std::string>();
  }

 private:
  Connection conn_;
};

class RemoteGenerator final : public Generator {
 public:
  explicit RemoteGenerator(const std::string& url) : conn_(url) {}
  Image generate(const Image& i1, const Image& i2, const std::string& prompt,
                 std::uint64_t seed) override {
    json req = wire::request(seed);
    req["image1"] = wire::encode_image(i1);
    req["image2"] = wire::encode_image(i2);
    req["prompt"] = prompt;
    return wire::decode_image(conn_.post_json("/v1/generate", req).at("image"));
  }

 private:
  Connection conn_;
};

class RemoteEvaluator final : public Evaluator {
 public:
  explicit RemoteEvaluator(const std::string& url) : conn_(url) {}
  std::vector<double> score(std::span<const Image> candidates, const Image& i1, const Image& i2,
                            std::uint64_t seed) override {
    json req = wire::request(seed);
    req["image1"] = wire::encode_image(i1);
    req["image2"] = wire::encode_image(i2);
    req["candidates"] = json::array();
    for (const auto& c : candidates) req["candidates"].push_back(wire::encode_image(c));
    return conn_.post_json("/v1/score", req).at("scores").get<std::vector<double>>();
  }

 private:
  Connection conn_;
};

class RemoteGeometry final : public GeometryPrior {
 public:
  explicit RemoteGeometry(const std::string& url) : conn_(url) {}
  PairPointmap pointmaps(const Image& image_i, const Image& image_j, int view_i, int view_j,
                         std::uint64_t seed) override {
    json req = wire::request(seed);
    req["image_i"] = wire::encode_image(image_i);
    req["image_j"] = wire::encode_image(image_j);
    req["view_i"] = view_i;
    req["view_j"] = view_j;
    std::string type;
    const auto body = conn_.post("/v1/pointmaps", req, &type);
    if (type.find("application/octet-stream") == std::string::npos) {
      throw MalformedFile("pointmaps response must be application/octet-stream");
    }
    return decode_ppmp(std::span(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
  }

 private:
  Connection conn_;
};

class RemoteInpainter final : public Inpainter {
 public:
  explicit RemoteInpainter(const std::string& url) : conn_(url) {}
  Image inpaint(const Image& rgb, const Mask& mask, const std::string& prompt,
                std::uint64_t seed) override {
    json req = wire::request(seed);
    req["image"] = wire::encode_image(rgb);
    req["mask"] = wire::encode_mask(mask);
    req["prompt"] = prompt;
    return wire::decode_image(conn_.post_json("/v1/inpaint", req).at("image"));
  }

 private:
  Connection conn_;
};

class RemoteDepth final : public DepthEstimator {
 public:
  explicit RemoteDepth(const std::string& url) : conn_(url) {}
  Image depth(const Image& rgb, const DepthHint* hint, std::uint64_t seed) override {
    json req = wire::request(seed);
    req["image"] = wire::encode_image(rgb);
    if (hint) {
      req["hint_depth"] = wire::encode_depth_map(hint->depth);
      req["hint_valid"] = wire::encode_mask(hint->valid);
    }
    return wire::decode_depth_map(conn_.post_json("/v1/depth", req).at("depth"));
  }

 private:
  Connection conn_;
};

class RemoteConsistency final : public ConsistencyModel {
 public:
  explicit RemoteConsistency(const std::string& url) : conn_(url) {}
  std::vector<Image> rectify(std::span<const Image> views, const ConsistencyParams& params,
                             std::uint64_t seed) override {
    json req = wire::request(seed);
    req["images"] = json::array();
    for (const auto& v : views) req["images"].push_back(wire::encode_image(v));
    req["noise_steps"] = params.noise_steps;
    req["total_steps"] = params.total_steps;
    req["guidance"] = params.guidance;
    std::vector<Image> out;
    const json response = conn_.post_json("/v1/consistency", req);
    for (const auto& field : response.at("images")) {
      out.push_back(wire::decode_image(field));
    }
    return out;
  }

 private:
  Connection conn_;
};

class RemoteGridInpainter final : public GridInpainter {
 public:
  explicit RemoteGridInpainter(const std::string& url) : conn_(url) {}
  Image grid_inpaint(const Image& composite, const Mask& mask, const GridInpaintParams& params,
                     std::uint64_t seed) override {
    json req = wire::request(seed);
    req["image"] = wire::encode_image(composite);
    req["mask"] = wire::encode_mask(mask);
    req["noise_level"] = params.noise_level;
    req["denoise_passes"] = params.denoise_passes;
    req["prompt"] = params.prompt;
    return wire::decode_image(conn_.post_json("/v1/grid_inpaint", req).at("image"));
  }

 private:
  Connection conn_;
};

class RemoteUpscaler final : public Upscaler {
 public:
  explicit RemoteUpscaler(const std::string& url) : conn_(url) {}
  Image upscale(const Image& rgb, int factor, std::uint64_t seed) override {
    json req = wire::request(seed);
    req["image"] = wire::encode_image(rgb);
    req["factor"] = factor;
    return wire::decode_image(conn_.post_json("/v1/upscale", req).at("image"));
  }

 private:
  Connection conn_;
};

}  // namespace

std::unique_ptr<PromptEngine> make_remote_prompt_engine(const std::string& url) {
  return std::make_unique<RemotePromptEngine>(url);
}
std::unique_ptr<Generator> make_remote_generator(const std::string& url) {
  return std::make_unique<RemoteGenerator>(url);
}
std::unique_ptr<Evaluator> make_remote_evaluator(const std::string& url) {
  return std::make_unique<RemoteEvaluator>(url);
}
std::unique_ptr<GeometryPrior> make_remote_geometry(const std::string& url) {
  return std::make_unique<RemoteGeometry>(url);
}
std::unique_ptr<Inpainter> make_remote_inpainter(const std::string& url) {
  return std::make_unique<RemoteInpainter>(url);
}
std::unique_ptr<DepthEstimator> make_remote_depth(const std::string& url) {
  return std::make_unique<RemoteDepth>(url);
}
std::unique_ptr<ConsistencyModel> make_remote_consistency(const std::string& url) {
  return std::make_unique<RemoteConsistency>(url);
}
std::unique_ptr<GridInpainter> make_remote_grid_inpainter(const std::string& url) {
  return std::make_unique<RemoteGridInpainter>(url);
}
std::unique_ptr<Upscaler> make_remote_upscaler(const std::string& url) {
  return std::make_unique<RemoteUpscaler>(url);
}

}  // namespace glados
