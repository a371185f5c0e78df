#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "glados/clients.hpp"
#include "glados/image.hpp"

namespace glados {

inline constexpr int kDefaultCandidates = 3;

struct BridgeResult {
  Image anchor_image;
  std::string prompt;
  std::vector<Image> candidates;
  std::vector<double> scores;
  std::size_t chosen_index = 0;
};

// Index of the largest score; ties go to the lowest index.
std::size_t argmax_lowest_index(std::span<const double> scores);

// Prompt from the meta-prompt, m candidates with seeds seed+k, evaluator
// selection of the anchor.
BridgeResult bridge(const Image& i1, const Image& i2, PriorClients& clients,
                    int m = kDefaultCandidates, std::uint64_t seed = 0);

// <dir>/candidate_k.png, anchor.png, scores.json, prompt.txt.
void write_bridge(const std::filesystem::path& dir, const BridgeResult& result);
BridgeResult read_bridge(const std::filesystem::path& dir);

}  // namespace glados
