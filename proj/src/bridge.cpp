#include "glados/bridge.hpp"

#include <json.hpp>

#include "glados/error.hpp"
#include "glados/meta_prompt.hpp"

namespace glados {

std::size_t argmax_lowest_index(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("no scores to select from");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

BridgeResult bridge(const Image& i1, const Image& i2, PriorClients& clients, int m,
                    std::uint64_t seed) {
  if (m < 1) throw InvalidArgument("bridge needs at least one candidate");
  if (!i1.same_shape(i2) || i1.channels() != 3) {
    throw DimensionMismatch("bridge inputs must be RGB images of equal size");
  }
  BridgeResult out;
  out.prompt = clients.prompt(i1, i2, std::string(kMetaPrompt), seed);
  for (int k = 0; k < m; ++k) {
    out.candidates.push_back(clients.generate(i1, i2, out.prompt, seed + static_cast<std::uint64_t>(k)));
  }
  out.scores = clients.score(out.candidates, i1, i2, seed);
  out.chosen_index = argmax_lowest_index(out.scores);
  out.anchor_image = out.candidates[out.chosen_index];
  return out;
}

void write_bridge(const std::filesystem::path& dir, const BridgeResult& result) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < result.candidates.size(); ++k) {
    write_png_rgb8(dir / ("candidate_" + std::to_string(k) + ".png"), result.candidates[k]);
  }
  write_png_rgb8(dir / "anchor.png", result.anchor_image);
  const nlohmann::json scores = {{"scores", result.scores},
                                 {"chosen_index", result.chosen_index},
                                 {"meta_prompt_version", kMetaPromptVersion}};
  write_text_file(dir / "scores.json", scores.dump(2) + "\n");
  write_text_file(dir / "prompt.txt", result.prompt);
}

BridgeResult read_bridge(const std::filesystem::path& dir) {
  BridgeResult out;
  nlohmann::json scores;
  try {
    scores = nlohmann::json::parse(read_text_file(dir / "scores.json"));
    out.scores = scores.at("scores").get<std::vector<double>>();
    out.chosen_index = scores.at("chosen_index").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile("bridge scores.json: " + std::string(e.what()));
  }
  for (std::size_t k = 0; k < out.scores.size(); ++k) {
    out.candidates.push_back(read_png_rgb(dir / ("candidate_" + std::to_string(k) + ".png")));
  }
  if (out.chosen_index >= out.candidates.size()) throw MalformedFile("bridge chosen_index out of range");
  out.anchor_image = out.candidates[out.chosen_index];
  out.prompt = read_text_file(dir / "prompt.txt");
  return out;
}

}  // namespace glados
