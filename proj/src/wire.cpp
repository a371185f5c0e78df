#include "glados/wire.hpp"

#include <sodium.h>

#include "glados/error.hpp"

namespace glados::wire {

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  const std::size_t len =
      sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // trailing NUL
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len,
                        nullptr, sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw MalformedFile("invalid base64 payload");
  }
  out.resize(len);
  return out;
}

namespace {

std::string field_text(const nlohmann::json& field) {
  if (!field.is_string()) throw MalformedFile("expected a base64 string field");
  return field.get<std::string>();
}

}  // namespace

std::string encode_image(const Image& rgb) { return base64_encode(encode_png_rgb8(rgb)); }

Image decode_image(const nlohmann::json& field) {
  return decode_png_rgb(base64_decode(field_text(field)));
}

std::string encode_mask(const Mask& mask) { return base64_encode(encode_png_mask(mask)); }

Mask decode_mask(const nlohmann::json& field) {
  return decode_png_mask(base64_decode(field_text(field)));
}

std::string encode_depth_map(const Image& depth) { return base64_encode(encode_depth(depth)); }

Image decode_depth_map(const nlohmann::json& field) {
  return decode_depth(base64_decode(field_text(field)));
}

nlohmann::json request(std::uint64_t seed) {
  return {{"v", kProtocolVersion}, {"seed", seed}};
}

nlohmann::json error_body(std::string_view code, std::string_view message) {
  return {{"code", code}, {"message", message}};
}

}  // namespace glados::wire
