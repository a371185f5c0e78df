#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "glados/clients.hpp"
#include "glados/error.hpp"
#include "glados/wire.hpp"
#include "json_schema.hpp"

#include <httplib.h>

namespace glados::testing {

// Loopback /v1 server backed by the in-process mocks. Every request is
// checked against schemas/<route>.request.json; failures map to the
// protocol's 400 / 422 / 503 codes.
class FixtureServer {
 public:
  explicit FixtureServer(MockOptions options = {}) : options_(std::move(options)) {
    install();
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FixtureServer() {
    server_.stop();
    thread_.join();
  }
  FixtureServer(const FixtureServer&) = delete;
  FixtureServer& operator=(const FixtureServer&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  // When set, every POST answers 503.
  void set_unavailable(bool v) { unavailable_ = v; }

  // Raw bodies of served responses per route, for schema checks.
  std::vector<nlohmann::json> responses(const std::string& route) {
    std::lock_guard lock(mutex_);
    return responses_[route];
  }
  std::vector<nlohmann::json> requests(const std::string& route) {
    std::lock_guard lock(mutex_);
    return requests_[route];
  }

 private:
  using json = nlohmann::json;
  using Handler = std::function<void(const json&, httplib::Response&)>;

  static void send_error(httplib::Response& res, int status, const std::string& code,
                         const std::string& message) {
    res.status = status;
    res.set_content(wire::error_body(code, message).dump(), "application/json");
  }

  void reply(const std::string& route, httplib::Response& res, json body) {
    body["v"] = wire::kProtocolVersion;
    body["backend"] = "fixture";
    body["latency_ms"] = 0.0;
    {
      std::lock_guard lock(mutex_);
      responses_[route].push_back(body);
    }
    res.set_content(body.dump(), "application/json");
  }

  void route(const std::string& name, Handler handler) {
    server_.Post("/v1/" + name, [this, name, handler](const httplib::Request& req,
                                                      httplib::Response& res) {
      if (unavailable_) return send_error(res, 503, "backend_unavailable", "fixture offline");
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        return send_error(res, 400, "schema", e.what());
      }
      const auto errors = schema_errors(body, name + ".request.json");
      if (!errors.empty()) return send_error(res, 400, "schema", errors.front());
      {
        std::lock_guard lock(mutex_);
        requests_[name].push_back(body);
      }
      try {
        handler(body, res);
      } catch (const MalformedFile& e) {
        send_error(res, 422, "undecodable_image", e.what());
      }
    });
  }

  void install() {
    server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      json body = {{"v", wire::kProtocolVersion}, {"backend", "fixture"}, {"latency_ms", 0.0},
                   {"status", "ok"}, {"endpoints", kClientStages}};
      res.set_content(body.dump(), "application/json");
    });
    route("prompt", [this](const json& b, httplib::Response& res) {
      auto out = prompt_->prompt(wire::decode_image(b["image1"]), wire::decode_image(b["image2"]),
                                 b["meta_prompt"], b["seed"]);
      reply("prompt", res, {{"prompt", out}});
    });
    route("generate", [this](const json& b, httplib::Response& res) {
      auto out = generator_->generate(wire::decode_image(b["image1"]),
                                      wire::decode_image(b["image2"]), b["prompt"], b["seed"]);
      reply("generate", res, {{"image", wire::encode_image(out)}});
    });
    route("score", [this](const json& b, httplib::Response& res) {
      std::vector<Image> candidates;
      for (const auto& c : b["candidates"]) candidates.push_back(wire::decode_image(c));
      auto out = evaluator_->score(candidates, wire::decode_image(b["image1"]),
                                   wire::decode_image(b["image2"]), b["seed"]);
      json body = json::object();
      body["scores"] = out;
      reply("score", res, std::move(body));
    });
    route("pointmaps", [this](const json& b, httplib::Response& res) {
      auto pair = geometry_->pointmaps(wire::decode_image(b["image_i"]),
                                       wire::decode_image(b["image_j"]), b["view_i"],
                                       b["view_j"], b["seed"]);
      const auto bytes = encode_ppmp(pair);
      res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
    });
    route("inpaint", [this](const json& b, httplib::Response& res) {
      const auto image = wire::decode_image(b["image"]);
      const auto mask = wire::decode_mask(b["mask"]);
      auto out = inpainter_->inpaint(image, mask, b["prompt"], b["seed"]);
      reply("inpaint", res, {{"image", wire::encode_image(out)}});
    });
    route("depth", [this](const json& b, httplib::Response& res) {
      const auto image = wire::decode_image(b["image"]);
      Image out;
      if (b.contains("hint_depth")) {
        DepthHint hint{wire::decode_depth_map(b["hint_depth"]), wire::decode_mask(b["hint_valid"])};
        out = depth_->depth(image, &hint, b["seed"]);
      } else {
        out = depth_->depth(image, nullptr, b["seed"]);
      }
      reply("depth", res, {{"depth", wire::encode_depth_map(out)}});
    });
    route("consistency", [this](const json& b, httplib::Response& res) {
      std::vector<Image> views;
      for (const auto& v : b["images"]) views.push_back(wire::decode_image(v));
      ConsistencyParams params{b["noise_steps"], b["total_steps"], b["guidance"]};
      json images = json::array();
      for (const auto& v : consistency_->rectify(views, params, b["seed"])) {
        images.push_back(wire::encode_image(v));
      }
      json body = json::object();
      body["images"] = std::move(images);
      reply("consistency", res, std::move(body));
    });
    route("grid_inpaint", [this](const json& b, httplib::Response& res) {
      GridInpaintParams params{b["noise_level"], b["denoise_passes"], b["prompt"]};
      auto out = grid_->grid_inpaint(wire::decode_image(b["image"]), wire::decode_mask(b["mask"]),
                                     params, b["seed"]);
      reply("grid_inpaint", res, {{"image", wire::encode_image(out)}});
    });
    route("upscale", [this](const json& b, httplib::Response& res) {
      auto out = upscaler_->upscale(wire::decode_image(b["image"]), b["factor"], b["seed"]);
      reply("upscale", res, {{"image", wire::encode_image(out)}});
    });
  }

  MockOptions options_;
  std::unique_ptr<PromptEngine> prompt_ = make_mock_prompt_engine();
  std::unique_ptr<Generator> generator_ = make_mock_generator();
  std::unique_ptr<Evaluator> evaluator_ = make_mock_evaluator();
  std::unique_ptr<GeometryPrior> geometry_ = make_mock_geometry(options_);
  std::unique_ptr<Inpainter> inpainter_ = make_mock_inpainter();
  std::unique_ptr<DepthEstimator> depth_ = make_mock_depth();
  std::unique_ptr<ConsistencyModel> consistency_ = make_mock_consistency();
  std::unique_ptr<GridInpainter> grid_ = make_mock_grid_inpainter();
  std::unique_ptr<Upscaler> upscaler_ = make_mock_upscaler();

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<bool> unavailable_{false};
  std::mutex mutex_;
  std::map<std::string, std::vector<json>> requests_;
  std::map<std::string, std::vector<json>> responses_;
};

}  // namespace glados::testing
