#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "glados/image.hpp"

// Encoding helpers for the prior-service wire protocol: JSON bodies with
// base64 payloads (PNG for images and masks, DPTH for depth).
namespace glados::wire {

inline constexpr int kProtocolVersion = 1;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string encode_image(const Image& rgb);
Image decode_image(const nlohmann::json& field);
std::string encode_mask(const Mask& mask);
Mask decode_mask(const nlohmann::json& field);
std::string encode_depth_map(const Image& depth);
Image decode_depth_map(const nlohmann::json& field);

// Envelope shared by every request.
nlohmann::json request(std::uint64_t seed);

// Machine-readable error body.
nlohmann::json error_body(std::string_view code, std::string_view message);

}  // namespace glados::wire
