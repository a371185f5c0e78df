#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace glados {

// Row-major H x W x C image of doubles. RGB images use C = 3 with values in
// [0,1]; depth and alpha maps use C = 1.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Binary per-pixel mask (0 or 1).
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, bool fill = false);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return bits_.size(); }

  bool at(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool value) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }
  std::size_t count() const noexcept;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Rounds every value to the nearest 8-bit level. Images crossing a client
// boundary are quantized so in-process and remote priors see identical data.
Image quantize8(const Image& image);

// Nearest-neighbour upscale by an integer factor.
Image upscale_nearest(const Image& image, int factor);
// Box-filter downscale by an integer factor; dimensions must divide evenly.
Image downscale_box(const Image& image, int factor);
// Bilinear resample to an arbitrary size (pixel centres aligned).
Image resize_bilinear(const Image& image, int width, int height);

// PNG codecs. RGB images are written as 8-bit RGB, single-channel maps as
// 16-bit grey (value * 65535), masks as 8-bit grey 0/255.
std::vector<std::uint8_t> encode_png_rgb8(const Image& rgb);
std::vector<std::uint8_t> encode_png_gray16(const Image& gray);
std::vector<std::uint8_t> encode_png_mask(const Mask& mask);
// Decodes any 8/16-bit grey/RGB/RGBA PNG into a 3-channel image in [0,1].
Image decode_png_rgb(std::span<const std::uint8_t> bytes);
// Decodes a grey PNG into a mask (nonzero -> 1).
Mask decode_png_mask(std::span<const std::uint8_t> bytes);

void write_png_rgb8(const std::filesystem::path& path, const Image& rgb);
void write_png_gray16(const std::filesystem::path& path, const Image& gray);
void write_png_mask(const std::filesystem::path& path, const Mask& mask);
Image read_png_rgb(const std::filesystem::path& path);
Mask read_png_mask(const std::filesystem::path& path);

// Float32 depth maps: 16-byte header ("DPTH", u32 width, u32 height,
// u32 reserved) followed by width*height little-endian floats.
std::vector<std::uint8_t> encode_depth(const Image& depth);
Image decode_depth(std::span<const std::uint8_t> bytes);
void write_depth(const std::filesystem::path& path, const Image& depth);
Image read_depth(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace glados
