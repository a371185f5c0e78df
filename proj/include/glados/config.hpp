#pragma once

#include <filesystem>
#include <string_view>

#include <json.hpp>

namespace glados {

// Reads the TOML subset used by run configs: [section] headers (dotted names
// allowed), key = value lines, '#' comments, and values that are quoted
// strings, booleans, integers, floats or single-line arrays of those.
// Returns a flat object keyed "section.key". Throws ConfigError with the
// offending line number.
nlohmann::json parse_config_text(std::string_view text);
nlohmann::json parse_config_file(const std::filesystem::path& path);

}  // namespace glados
