#include "glados/config.hpp"

#include <cctype>
#include <charconv>
#include <string>

#include "glados/error.hpp"
#include "glados/image.hpp"

namespace glados {

namespace {

class LineParser {
 public:
  LineParser(std::string_view text, int line) : s_(text), line_(line) {}

  nlohmann::json value() {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    return scalar();
  }

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  // Anything after the value must be blank or a comment.
  void finish() {
    skip_space();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("unexpected trailing text");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

 private:
  nlohmann::json string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unknown escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json array() {
    ++pos_;
    nlohmann::json out = nlohmann::json::array();
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      out.push_back(value());
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']' in array");
    }
  }

  nlohmann::json scalar() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' &&
           s_[pos_] != ' ' && s_[pos_] != '\t') {
      ++pos_;
    }
    const std::string_view tok = s_.substr(start, pos_ - start);
    if (tok == "true") return true;
    if (tok == "false") return false;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (tok.find_first_of(".eE") == std::string_view::npos || tok == "inf") {
      std::int64_t i = 0;
      const auto r = std::from_chars(first, last, i);
      if (r.ec == std::errc() && r.ptr == last) return i;
    }
    double d = 0.0;
    const auto r = std::from_chars(first, last, d);
    if (r.ec == std::errc() && r.ptr == last) return d;
    fail("cannot parse value '" + std::string(tok) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) {
      return false;
    }
  }
  return k.front() != '.' && k.back() != '.';
}

}  // namespace

nlohmann::json parse_config_text(std::string_view text) {
  nlohmann::json out = nlohmann::json::object();
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    LineParser err(line, line_no);
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) err.fail("unterminated section header");
      const auto name = trim(line.substr(1, close - 1));
      if (!valid_key(name)) err.fail("invalid section name");
      const auto rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') err.fail("unexpected text after section header");
      section = std::string(name);
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) err.fail("expected key = value");
      const auto key = trim(line.substr(0, eq));
      if (!valid_key(key)) err.fail("invalid key '" + std::string(key) + "'");
      const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
      if (out.contains(full)) err.fail("duplicate key '" + full + "'");
      LineParser p(line.substr(eq + 1), line_no);
      out[full] = p.value();
      p.finish();
    }
    if (end == text.size()) break;
  }
  return out;
}

nlohmann::json parse_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config_text(read_text_file(path));
}

}  // namespace glados
