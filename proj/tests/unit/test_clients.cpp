#include <doctest.h>

#include <filesystem>
#include <random>

#include "fixture_server.hpp"
#include "glados/clients.hpp"
#include "glados/depth_lift.hpp"
#include "glados/error.hpp"
#include "glados/rasterizer.hpp"
#include "glados/seeds.hpp"
#include "glados/wire.hpp"
#include "json_schema.hpp"
#include "random_scenes.hpp"

using namespace glados;
using nlohmann::json;

namespace {

Image noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(w, h, 3);
  for (double& v : img.data()) v = unit_double(rng);
  return quantize8(img);
}

Mask random_mask(int w, int h, std::uint64_t seed, double fraction) {
  std::mt19937_64 rng(seed);
  Mask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, unit_double(rng) < fraction);
  return m;
}

bool same_pixels(const Image& a, const Image& b) {
  return a.same_shape(b) && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("glados_clients_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

class ThrowingDepth final : public DepthEstimator {
 public:
  Image depth(const Image&, const DepthHint*, std::uint64_t) override {
    throw std::runtime_error("model exploded");
  }
};

class WrongShapeGenerator final : public Generator {
 public:
  Image generate(const Image&, const Image&, const std::string&, std::uint64_t) override {
    return Image(3, 3, 3);
  }
};

class ShortEvaluator final : public Evaluator {
 public:
  std::vector<double> score(std::span<const Image>, const Image&, const Image&,
                            std::uint64_t) override {
    return {1.0};
  }
};

}  // namespace

TEST_CASE("endpoint list parsing") {
  const auto map = parse_endpoint_list("depth=http://a:1,pointmaps=mock,,inpaint=http://b:2/x");
  CHECK(map.size() == 3);
  CHECK(map.at("depth") == "http://a:1");
  CHECK(map.at("pointmaps") == "mock");
  CHECK(map.at("inpaint") == "http://b:2/x");
  CHECK(parse_endpoint_list("").empty());
  CHECK_THROWS_AS(parse_endpoint_list("depth"), ConfigError);
  CHECK_THROWS_AS(parse_endpoint_list("=http://a"), ConfigError);
  CHECK_THROWS_AS(parse_endpoint_list("depth="), ConfigError);
  CHECK_THROWS_AS(parse_endpoint_list("warp=http://a"), ConfigError);
}

TEST_CASE("mode bookkeeping records mock or url per stage") {
  const auto clients = PriorClients::from_endpoints({{"depth", "http://127.0.0.1:9"}});
  CHECK(clients.modes().size() == kClientStages.size());
  for (const char* stage : kClientStages) {
    CHECK(clients.modes().at(stage) == (std::string(stage) == "depth" ? "http://127.0.0.1:9" : "mock"));
  }
}

TEST_CASE("base64 and payload codecs round trip") {
  std::vector<std::uint8_t> bytes;
  for (int n = 0; n < 10; ++n) {
    CHECK(wire::base64_decode(wire::base64_encode(bytes)) == bytes);
    bytes.push_back(static_cast<std::uint8_t>(37 * n + 5));
  }
  CHECK(wire::base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}) == "Zm9vYg==");
  CHECK_THROWS_AS(wire::base64_decode("Zm9v!"), MalformedFile);

  const Image img = noise_image(7, 5, 1);
  CHECK(same_pixels(wire::decode_image(wire::encode_image(img)), img));
  const Mask mask = random_mask(7, 5, 2, 0.4);
  const Mask back = wire::decode_mask(wire::encode_mask(mask));
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) CHECK(back.at(x, y) == mask.at(x, y));
  Image depth(4, 3, 1);
  for (std::size_t k = 0; k < depth.data().size(); ++k) depth.data()[k] = 0.25 * k + 1.0;
  CHECK(same_pixels(wire::decode_depth_map(wire::encode_depth_map(depth)), depth));
  CHECK_THROWS_AS(wire::decode_image(json(3)), MalformedFile);
  CHECK_THROWS_AS(wire::decode_image(json("aGVsbG8=")), MalformedFile);

  const auto env = wire::request(42);
  CHECK(env.at("v") == 1);
  CHECK(env.at("seed") == 42);
  CHECK(testing::schema_errors(wire::error_body("schema", "bad"), "error.json").empty());
}

TEST_CASE("mock generation is deterministic per seed") {
  auto clients = PriorClients::mock();
  const Image a = noise_image(16, 16, 3), b = noise_image(16, 16, 4);
  const Image g1 = clients.generate(a, b, "p", 11);
  const Image g2 = clients.generate(a, b, "p", 11);
  const Image g3 = clients.generate(a, b, "p", 12);
  CHECK(encode_png_rgb8(g1) == encode_png_rgb8(g2));
  CHECK_FALSE(same_pixels(g1, g3));
  CHECK(clients.prompt(a, b, "meta", 5) == clients.prompt(a, b, "meta", 5));
}

TEST_CASE("inpainting leaves unmasked pixels untouched") {
  auto clients = PriorClients::mock();
  const Image img = noise_image(24, 20, 5);
  const Mask none(24, 20);
  CHECK(same_pixels(clients.grid_inpaint(img, none, {0.2, 3, "x"}, 9), img));
  CHECK(same_pixels(clients.inpaint(img, none, "x", 9), img));

  // The raw mocks honour the contract themselves, bit for bit.
  auto grid = make_mock_grid_inpainter();
  auto inp = make_mock_inpainter();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Mask mask = random_mask(24, 20, 100 + seed, 0.3);
    const Image g = grid->grid_inpaint(img, mask, {0.2, 3, "x"}, seed);
    const Image p = inp->inpaint(img, mask, "x", seed);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 24; ++x) {
        if (mask.at(x, y)) continue;
        for (int c = 0; c < 3; ++c) {
          CHECK(g.at(x, y, c) == img.at(x, y, c));
          CHECK(p.at(x, y, c) == img.at(x, y, c));
        }
      }
    }
  }
}

TEST_CASE("diffuse fill stays within the range of the known pixels") {
  Image img(9, 9, 3, 0.0);
  Mask mask(9, 9);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) {
      const double v = x < 3 ? 0.2 : 0.8;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
      mask.set(x, y, x >= 3 && x <= 5);
    }
  }
  const Image out = diffuse_fill(img, mask);
  for (int y = 0; y < 9; ++y) {
    for (int x = 3; x <= 5; ++x) {
      CHECK(out.at(x, y, 0) >= 0.2 - 1e-12);
      CHECK(out.at(x, y, 0) <= 0.8 + 1e-12);
    }
  }
  CHECK(diffuse_fill(img, Mask(9, 9, true)).at(4, 4, 1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(diffuse_fill(img, Mask(8, 9)), DimensionMismatch);
}

TEST_CASE("depth hint lets affine alignment recover unit scale") {
  std::mt19937_64 rng(77);
  const auto scene = testing::random_scene(rng, 150, 0.15, 0.4);
  const auto view = testing::identity_view(48);
  const auto frame = render(scene, view);
  const Mask valid = alignment_mask(frame.alpha, frame.depth);
  REQUIRE(valid.count() > 200);

  for (const bool remote : {false, true}) {
    std::unique_ptr<testing::FixtureServer> server;
    auto clients = PriorClients::mock();
    if (remote) {
      server = std::make_unique<testing::FixtureServer>();
      clients = PriorClients::from_endpoints({{"depth", server->url()}});
    }
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      DepthHint hint{frame.depth, valid};
      const Image pred = clients.depth(frame.rgb, &hint, seed);
      const auto fit = affine_align(pred, frame.depth, alignment_mask(frame.alpha, pred));
      CHECK(fit.accepted);
      CHECK(std::abs(fit.scale - 1.0) <= 0.05);
    }
  }
}

TEST_CASE("failures surface as ClientError naming the stage") {
  auto clients = PriorClients::mock();
  const Image img = noise_image(8, 8, 1);
  clients.set_depth(std::make_unique<ThrowingDepth>(), "mock");
  try {
    clients.depth(img, nullptr, 0);
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.stage() == "depth");
    CHECK(e.detail() == "model exploded");
  }
  clients.set_generator(std::make_unique<WrongShapeGenerator>(), "mock");
  CHECK_THROWS_AS(clients.generate(img, img, "p", 0), ClientError);
  clients.set_evaluator(std::make_unique<ShortEvaluator>(), "mock");
  const std::vector<Image> two{img, img};
  CHECK_THROWS_AS(clients.score(two, img, img, 0), ClientError);
  CHECK_THROWS_AS(clients.inpaint(img, Mask(4, 4), "p", 0), ClientError);
  CHECK_THROWS_AS(clients.rectify(two, {0, 50, false}, 0), ClientError);
  CHECK_THROWS_AS(clients.upscale(img, 0, 0), ClientError);
  clients.set_upscaler(nullptr, "mock");
  CHECK_THROWS_AS(clients.upscale(img, 2, 0), ClientError);
}

TEST_CASE("unreachable endpoint is a ClientError") {
  // Port 9 on loopback has no listener.
  auto clients = PriorClients::from_endpoints({{"generate", "http://127.0.0.1:9"}});
  const Image img = noise_image(8, 8, 1);
  try {
    clients.generate(img, img, "p", 0);
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.stage() == "generate");
  }
  CHECK_THROWS_AS(PriorClients::from_endpoints({{"generate", "localhost:80"}}), ConfigError);
}

TEST_CASE("call log records every call and flushes as JSON lines") {
  auto clients = PriorClients::mock();
  const Image img = noise_image(8, 8, 1);
  clients.generate(img, img, "p", 3);
  clients.upscale(img, 2, 4);
  clients.grid_inpaint(img, random_mask(8, 8, 1, 0.5), {0.2, 4, "p"}, 5);
  REQUIRE(clients.call_log().size() == 3);
  CHECK(clients.call_log()[0].at("stage") == "generate");
  CHECK(clients.call_log()[0].at("seed") == 3);
  CHECK(clients.call_log()[1].at("factor") == 2);
  CHECK(clients.call_log()[2].at("denoise_passes") == 4);
  CHECK(clients.call_log()[2].at("call") == 2);
  CHECK(clients.call_log()[2].at("mode") == "mock");

  const auto path = scratch("log") / "calls.jsonl";
  clients.flush_log(path);
  CHECK(clients.call_log().empty());
  clients.upscale(img, 1, 0);
  clients.flush_log(path);
  const auto text = read_text_file(path);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("geometry mock serves pointmap fixtures with submitted colours") {
  const auto dir = scratch("ppmp");
  PairPointmap pair;
  pair.view_i = 2;
  pair.view_j = 5;
  pair.pointmap_i = Image(4, 4, 3, 1.0);
  pair.pointmap_j = Image(4, 4, 3, 2.0);
  pair.confidence_i = Image(4, 4, 1, 1.5);
  pair.confidence_j = Image(4, 4, 1, 0.5);
  pair.colors_i = Image(4, 4, 3, 0.0);
  pair.colors_j = Image(4, 4, 3, 0.0);
  write_ppmp(dir / "pair_2_5.ppmp", pair);

  auto clients = PriorClients::mock({dir});
  const Image white(8, 8, 3, 1.0);
  const auto got = clients.pointmaps(white, white, 2, 5, 0);
  CHECK(got.pointmap_j.at(1, 1, 2) == 2.0);
  CHECK(got.confidence_j.at(0, 0) == 0.5);
  CHECK(got.colors_i.at(3, 3, 0) == doctest::Approx(1.0));
  // No fixture for the pair: heuristic at half resolution.
  const auto fallback = clients.pointmaps(white, white, 5, 2, 0);
  CHECK(fallback.pointmap_i.width() == 4);
  CHECK(fallback.view_i == 5);
}

TEST_CASE("remote clients match mocks through the wire and honour the schemas") {
  testing::FixtureServer server;
  EndpointMap all;
  for (const char* stage : kClientStages) all[stage] = server.url();
  auto remote = PriorClients::from_endpoints(all);
  auto local = PriorClients::mock();

  const Image a = noise_image(16, 12, 21), b = noise_image(16, 12, 22);
  const Mask mask = random_mask(16, 12, 23, 0.3);

  CHECK(remote.prompt(a, b, "meta", 1) == local.prompt(a, b, "meta", 1));
  const Image g = remote.generate(a, b, "p", 2);
  CHECK(same_pixels(g, local.generate(a, b, "p", 2)));
  const std::vector<Image> cands{a, b, g};
  CHECK(remote.score(cands, a, b, 3) == local.score(cands, a, b, 3));
  const auto pr = remote.pointmaps(a, b, 0, 1, 4);
  const auto pl = local.pointmaps(a, b, 0, 1, 4);
  CHECK(same_pixels(pr.pointmap_i, pl.pointmap_i));
  CHECK(same_pixels(pr.colors_j, pl.colors_j));
  CHECK(same_pixels(remote.inpaint(a, mask, "p", 5), local.inpaint(a, mask, "p", 5)));
  CHECK(same_pixels(remote.depth(a, nullptr, 6), local.depth(a, nullptr, 6)));
  DepthHint hint{Image(16, 12, 1, 2.0), mask};
  CHECK(same_pixels(remote.depth(a, &hint, 6), local.depth(a, &hint, 6)));
  const std::vector<Image> views{a, b};
  const auto rr = remote.rectify(views, {10, 50, true}, 7);
  const auto rl = local.rectify(views, {10, 50, true}, 7);
  REQUIRE(rr.size() == 2);
  CHECK(same_pixels(rr[1], rl[1]));
  CHECK(same_pixels(remote.grid_inpaint(a, mask, {0.2, 3, "p"}, 8),
                    local.grid_inpaint(a, mask, {0.2, 3, "p"}, 8)));
  CHECK(same_pixels(remote.upscale(a, 2, 9), local.upscale(a, 2, 9)));
  CHECK(remote.call_log().back().at("mode") == server.url());

  for (const char* stage : kClientStages) {
    const std::string name = stage;
    const auto requests = server.requests(name);
    CHECK_MESSAGE(!requests.empty(), name);
    for (const auto& r : requests) CHECK(testing::schema_errors(r, name + ".request.json").empty());
    if (name == "pointmaps") continue;
    for (const auto& r : server.responses(name)) {
      const auto errors = testing::schema_errors(r, name + ".response.json");
      CHECK_MESSAGE(errors.empty(), name);
    }
  }

  httplib::Client raw(server.url());
  const auto health = raw.Get("/v1/health");
  REQUIRE(health);
  CHECK(testing::schema_errors(json::parse(health->body), "health.response.json").empty());
}

TEST_CASE("protocol errors map to status codes and ClientError") {
  testing::FixtureServer server;
  httplib::Client raw(server.url());

  json missing = wire::request(1);
  missing["image1"] = wire::encode_image(noise_image(4, 4, 1));
  auto res = raw.Post("/v1/generate", missing.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(testing::schema_errors(json::parse(res->body), "error.json").empty());
  CHECK(json::parse(res->body).at("code") == "schema");

  json garbled = wire::request(1);
  garbled["image"] = wire::base64_encode(std::vector<std::uint8_t>{1, 2, 3, 4});
  garbled["factor"] = 2;
  res = raw.Post("/v1/upscale", garbled.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  CHECK(json::parse(res->body).at("code") == "undecodable_image");

  server.set_unavailable(true);
  auto clients = PriorClients::from_endpoints({{"upscale", server.url()}});
  try {
    clients.upscale(noise_image(4, 4, 1), 2, 0);
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.stage() == "upscale");
    CHECK(e.detail().find("503") != std::string::npos);
    CHECK(e.detail().find("backend_unavailable") != std::string::npos);
  }
}
