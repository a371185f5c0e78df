#include "glados/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "glados/error.hpp"

namespace glados {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels <= 0) {
    throw InvalidArgument("image dimensions must be non-negative");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Mask::Mask(int width, int height, bool fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw InvalidArgument("mask dimensions must be non-negative");
  }
  bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::uint16_t to_u16(double v) {
  return static_cast<std::uint16_t>(
      std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

std::vector<std::uint8_t> write_png(png_image& header, const void* buffer) {
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&header, nullptr, &size, 0, buffer, 0,
                                 nullptr)) {
    throw MalformedFile(std::string("png encode: ") + header.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&header, out.data(), &size, 0, buffer, 0,
                                 nullptr)) {
    throw MalformedFile(std::string("png encode: ") + header.message);
  }
  out.resize(size);
  return out;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace

Image quantize8(const Image& image) {
  Image out = image;
  for (double& v : out.data()) v = to_u8(v) / 255.0;
  return out;
}

Image upscale_nearest(const Image& image, int factor) {
  if (factor < 1) throw InvalidArgument("upscale factor must be >= 1");
  Image out(image.width() * factor, image.height() * factor, image.channels());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        out.at(x, y, c) = image.at(x / factor, y / factor, c);
      }
    }
  }
  return out;
}

Image downscale_box(const Image& image, int factor) {
  if (factor < 1 || image.width() % factor != 0 || image.height() % factor != 0) {
    throw DimensionMismatch("downscale factor must divide image dimensions");
  }
  Image out(image.width() / factor, image.height() / factor, image.channels());
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            sum += image.at(x * factor + dx, y * factor + dy, c);
          }
        }
        out.at(x, y, c) = sum * norm;
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (image.empty()) throw InvalidArgument("cannot resize an empty image");
  Image out(width, height, image.channels());
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels(); ++c) {
        const double top = image.at(x0, y0, c) * (1 - wx) + image.at(x1, y0, c) * wx;
        const double bottom = image.at(x0, y1, c) * (1 - wx) + image.at(x1, y1, c) * wx;
        out.at(x, y, c) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_png_rgb8(const Image& rgb) {
  if (rgb.channels() != 3) throw DimensionMismatch("expected an RGB image");
  std::vector<std::uint8_t> pixels;
  pixels.reserve(rgb.data().size());
  for (double v : rgb.data()) pixels.push_back(to_u8(v));
  png_image header{};
  header.version = PNG_IMAGE_VERSION;
  header.width = static_cast<png_uint_32>(rgb.width());
  header.height = static_cast<png_uint_32>(rgb.height());
  header.format = PNG_FORMAT_RGB;
  return write_png(header, pixels.data());
}

std::vector<std::uint8_t> encode_png_gray16(const Image& gray) {
  if (gray.channels() != 1) throw DimensionMismatch("expected a single-channel map");
  std::vector<std::uint16_t> pixels;
  pixels.reserve(gray.data().size());
  for (double v : gray.data()) pixels.push_back(to_u16(v));
  png_image header{};
  header.version = PNG_IMAGE_VERSION;
  header.width = static_cast<png_uint_32>(gray.width());
  header.height = static_cast<png_uint_32>(gray.height());
  header.format = PNG_FORMAT_LINEAR_Y;
  return write_png(header, pixels.data());
}

std::vector<std::uint8_t> encode_png_mask(const Mask& mask) {
  std::vector<std::uint8_t> pixels(mask.pixel_count());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      pixels[static_cast<std::size_t>(y) * mask.width() + x] = mask.at(x, y) ? 255 : 0;
    }
  }
  png_image header{};
  header.version = PNG_IMAGE_VERSION;
  header.width = static_cast<png_uint_32>(mask.width());
  header.height = static_cast<png_uint_32>(mask.height());
  header.format = PNG_FORMAT_GRAY;
  return write_png(header, pixels.data());
}

namespace {

std::vector<std::uint8_t> decode_png_8bit(std::span<const std::uint8_t> bytes,
                                          png_uint_32 format, int& width,
                                          int& height) {
  png_image header{};
  header.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&header, bytes.data(), bytes.size())) {
    throw MalformedFile(std::string("png decode: ") + header.message);
  }
  header.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(header));
  if (!png_image_finish_read(&header, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&header);
    throw MalformedFile(std::string("png decode: ") + header.message);
  }
  width = static_cast<int>(header.width);
  height = static_cast<int>(header.height);
  return pixels;
}

}  // namespace

Image decode_png_rgb(std::span<const std::uint8_t> bytes) {
  int width = 0, height = 0;
  const auto pixels = decode_png_8bit(bytes, PNG_FORMAT_RGB, width, height);
  Image out(width, height, 3);
  auto data = out.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) data[i] = pixels[i] / 255.0;
  return out;
}

Mask decode_png_mask(std::span<const std::uint8_t> bytes) {
  int width = 0, height = 0;
  const auto pixels = decode_png_8bit(bytes, PNG_FORMAT_GRAY, width, height);
  Mask out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.set(x, y, pixels[static_cast<std::size_t>(y) * width + x] != 0);
    }
  }
  return out;
}

void write_png_rgb8(const std::filesystem::path& path, const Image& rgb) {
  write_file_bytes(path, encode_png_rgb8(rgb));
}

void write_png_gray16(const std::filesystem::path& path, const Image& gray) {
  write_file_bytes(path, encode_png_gray16(gray));
}

void write_png_mask(const std::filesystem::path& path, const Mask& mask) {
  write_file_bytes(path, encode_png_mask(mask));
}

Image read_png_rgb(const std::filesystem::path& path) {
  return decode_png_rgb(read_file_bytes(path));
}

Mask read_png_mask(const std::filesystem::path& path) {
  return decode_png_mask(read_file_bytes(path));
}

std::vector<std::uint8_t> encode_depth(const Image& depth) {
  if (depth.channels() != 1) throw DimensionMismatch("depth map must have one channel");
  std::vector<std::uint8_t> out{'D', 'P', 'T', 'H'};
  put_u32(out, static_cast<std::uint32_t>(depth.width()));
  put_u32(out, static_cast<std::uint32_t>(depth.height()));
  put_u32(out, 0);
  out.reserve(out.size() + depth.pixel_count() * 4);
  for (double v : depth.data()) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Image decode_depth(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "DPTH", 4) != 0) {
    throw MalformedFile("depth map: missing DPTH header");
  }
  const auto width = get_u32(bytes, 4);
  const auto height = get_u32(bytes, 8);
  const std::size_t expected = 16 + static_cast<std::size_t>(width) * height * 4;
  if (bytes.size() != expected) {
    throw MalformedFile("depth map: payload size does not match header");
  }
  Image out(static_cast<int>(width), static_cast<int>(height), 1);
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
  }
  return out;
}

void write_depth(const std::filesystem::path& path, const Image& depth) {
  write_file_bytes(path, encode_depth(depth));
}

Image read_depth(const std::filesystem::path& path) {
  return decode_depth(read_file_bytes(path));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedFile("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MalformedFile("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                   text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace glados
