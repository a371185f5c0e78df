#include <doctest.h>

#include <random>

#include "glados/bridge.hpp"
#include "glados/error.hpp"
#include "glados/meta_prompt.hpp"
#include "glados/seeds.hpp"

using namespace glados;

namespace {

Image noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(w, h, 3);
  for (double& v : img.data()) v = unit_double(rng);
  return quantize8(img);
}

class FixedEvaluator final : public Evaluator {
 public:
  explicit FixedEvaluator(std::vector<double> scores) : scores_(std::move(scores)) {}
  std::vector<double> score(std::span<const Image>, const Image&, const Image&,
                            std::uint64_t) override {
    return scores_;
  }

 private:
  std::vector<double> scores_;
};

class FailingGenerator final : public Generator {
 public:
  Image generate(const Image&, const Image&, const std::string&, std::uint64_t) override {
    throw std::runtime_error("quota exceeded");
  }
};

}  // namespace

TEST_CASE("meta-prompt resource is pinned") {
  CHECK(kMetaPromptVersion == "v1");
  CHECK(sha256_hex(kMetaPrompt) ==
        "b009e8202a1f9136d7f7dc35d76193785b24629d0ac630566b6ffa24344a8719");
}

TEST_CASE("argmax with lowest-index tie-break") {
  const std::vector<double> a{0.2, 0.9, 0.5};
  CHECK(argmax_lowest_index(a) == 1);
  const std::vector<double> flat{0.4, 0.4, 0.4};
  CHECK(argmax_lowest_index(flat) == 0);
  const std::vector<double> late_tie{0.1, 0.7, 0.7};
  CHECK(argmax_lowest_index(late_tie) == 1);
  CHECK_THROWS_AS(argmax_lowest_index(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("choice is invariant to positive rescaling of scores") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + trial % 6);
    for (double& v : s) v = std::floor(unit_double(rng) * 4.0) - 2.0;  // frequent ties
    const double c = 0.01 + 100.0 * unit_double(rng);
    std::vector<double> scaled = s;
    for (double& v : scaled) v *= c;
    CHECK(argmax_lowest_index(s) == argmax_lowest_index(scaled));
  }
}

TEST_CASE("bridge samples m candidates and picks the evaluator's best") {
  const Image i1 = noise_image(16, 16, 1), i2 = noise_image(16, 16, 2);
  auto clients = PriorClients::mock();
  clients.set_evaluator(std::make_unique<FixedEvaluator>(std::vector<double>{0.2, 0.9, 0.5}), "mock");
  const auto r = bridge(i1, i2, clients, 3, 40);
  CHECK(r.candidates.size() == 3);
  CHECK(r.scores.size() == 3);
  CHECK(r.chosen_index == 1);
  CHECK(r.anchor_image.data()[0] == r.candidates[1].data()[0]);
  CHECK_FALSE(r.prompt.empty());

  // Candidate k uses seed + k, so m can grow without changing earlier ones.
  auto plain = PriorClients::mock();
  const auto r5 = bridge(i1, i2, plain, 5, 40);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::equal(r5.candidates[k].data().begin(), r5.candidates[k].data().end(),
                     r.candidates[k].data().begin()));
  }
  const auto& log = plain.call_log();
  CHECK(log[1].at("seed") == 40);
  CHECK(log[5].at("seed") == 44);
}

TEST_CASE("bridge is deterministic under mock clients") {
  const Image i1 = noise_image(16, 16, 3), i2 = noise_image(16, 16, 4);
  auto c1 = PriorClients::mock();
  auto c2 = PriorClients::mock();
  const auto a = bridge(i1, i2, c1, 3, 7);
  const auto b = bridge(i1, i2, c2, 3, 7);
  CHECK(a.prompt == b.prompt);
  CHECK(a.scores == b.scores);
  CHECK(a.chosen_index == b.chosen_index);
  for (int k = 0; k < 3; ++k) CHECK(encode_png_rgb8(a.candidates[k]) == encode_png_rgb8(b.candidates[k]));
}

TEST_CASE("bridge validates inputs and propagates client failures") {
  const Image i1 = noise_image(16, 16, 1);
  auto clients = PriorClients::mock();
  CHECK_THROWS_AS(bridge(i1, noise_image(8, 16, 2), clients, 3, 0), DimensionMismatch);
  CHECK_THROWS_AS(bridge(i1, i1, clients, 0, 0), InvalidArgument);
  clients.set_generator(std::make_unique<FailingGenerator>(), "mock");
  try {
    bridge(i1, i1, clients, 3, 0);
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.stage() == "generate");
  }
}

TEST_CASE("bridge artifacts round trip") {
  const Image i1 = noise_image(12, 10, 1), i2 = noise_image(12, 10, 2);
  auto clients = PriorClients::mock();
  const auto r = bridge(i1, i2, clients, 3, 9);
  const auto dir = std::filesystem::temp_directory_path() / "glados_bridge_artifacts";
  std::filesystem::remove_all(dir);
  write_bridge(dir, r);
  for (const char* f : {"candidate_0.png", "candidate_2.png", "anchor.png", "scores.json", "prompt.txt"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const auto back = read_bridge(dir);
  CHECK(back.prompt == r.prompt);
  CHECK(back.scores == r.scores);
  CHECK(back.chosen_index == r.chosen_index);
  CHECK(encode_png_rgb8(back.anchor_image) == encode_png_rgb8(r.anchor_image));
  CHECK_THROWS_AS(read_bridge(dir / "missing"), MalformedFile);
}
