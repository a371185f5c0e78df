#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <sstream>

#include "glados/clients.hpp"
#include "glados/error.hpp"
#include "glados/seeds.hpp"

namespace glados {

namespace {

double luminance(const Image& img, int x, int y) {
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

Vec3 mean_color(const Image& img) {
  Vec3 sum = Vec3::Zero();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) sum[c] += img.at(x, y, c);
  return sum / static_cast<double>(std::max<std::size_t>(1, img.pixel_count()));
}

Image box_blur3(const Image& img) {
  Image out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        double sum = 0.0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= img.width() || yy >= img.height()) continue;
            sum += img.at(xx, yy, c);
            ++n;
          }
        }
        out.at(x, y, c) = sum / n;
      }
    }
  }
  return out;
}

// Seeded low-amplitude texture added to masked pixels.
void add_texture(Image& img, const Mask& mask, double amplitude, std::uint64_t seed) {
  if (amplitude <= 0.0) return;
  std::mt19937_64 rng(seed);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double n = amplitude * (2.0 * unit_double(rng) - 1.0);
      if (!mask.at(x, y)) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(img.at(x, y, c) + n, 0.0, 1.0);
    }
  }
}

class MockPromptEngine final : public PromptEngine {
 public:
  std::string prompt(const Image& i1, const Image& i2, const std::string& meta_prompt,
                     std::uint64_t seed) override {
    const Vec3 a = mean_color(i1), b = mean_color(i2);
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << "A continuous interior linking a region of mean colour ("
        << a[0] << ", " << a[1] << ", " << a[2] << ") to a region of mean colour (" << b[0]
        << ", " << b[1] << ", " << b[2] << "); consistent lighting and materials. [meta "
        << sha256_hex(meta_prompt).substr(0, 8) << ", seed " << seed % 1000 << "]";
    return out.str();
  }
};

class MockGenerator final : public Generator {
 public:
  Image generate(const Image& i1, const Image& i2, const std::string&,
                 std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    const double t = 0.35 + 0.3 * unit_double(rng);
    Image mix(i1.width(), i1.height(), 3);
    for (std::size_t k = 0; k < mix.data().size(); ++k) {
      mix.data()[k] = (1.0 - t) * i1.data()[k] + t * i2.data()[k];
    }
    return box_blur3(mix);
  }
};

// Image gradient magnitude sum per pixel (forward differences, all channels).
Image gradient_field(const Image& img) {
  Image g(img.width(), img.height(), 2);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double gx = 0.0, gy = 0.0;
      for (int c = 0; c < 3; ++c) {
        if (x + 1 < img.width()) gx += img.at(x + 1, y, c) - img.at(x, y, c);
        if (y + 1 < img.height()) gy += img.at(x, y + 1, c) - img.at(x, y, c);
      }
      g.at(x, y, 0) = gx;
      g.at(x, y, 1) = gy;
    }
  }
  return g;
}

class MockEvaluator final : public Evaluator {
 public:
  std::vector<double> score(std::span<const Image> candidates, const Image& i1, const Image& i2,
                            std::uint64_t) override {
    const Image g1 = gradient_field(i1), g2 = gradient_field(i2);
    std::vector<double> out;
    for (const auto& c : candidates) {
      if (!c.same_shape(i1)) throw DimensionMismatch("candidate shape differs from inputs");
      const Image gc = gradient_field(c);
      double diff = 0.0;
      for (std::size_t k = 0; k < gc.data().size(); ++k) {
        diff += std::abs(gc.data()[k] - 0.5 * (g1.data()[k] + g2.data()[k]));
      }
      out.push_back(-diff / static_cast<double>(gc.data().size()));
    }
    return out;
  }
};

Image resize_to(const Image& img, int w, int h) {
  if (img.width() == w && img.height() == h) return img;
  if (img.width() % w == 0 && img.height() % h == 0 && img.width() / w == img.height() / h) {
    return downscale_box(img, img.width() / w);
  }
  return resize_bilinear(img, w, h);
}

class MockGeometry final : public GeometryPrior {
 public:
  explicit MockGeometry(MockOptions options) : options_(std::move(options)) {}

  PairPointmap pointmaps(const Image& image_i, const Image& image_j, int view_i, int view_j,
                         std::uint64_t) override {
    if (options_.pointmap_dir) {
      const auto path = *options_.pointmap_dir /
                        ("pair_" + std::to_string(view_i) + "_" + std::to_string(view_j) + ".ppmp");
      if (std::filesystem::exists(path)) {
        PairPointmap pair = read_ppmp(path);
        // Colours always come from the submitted images.
        pair.colors_i = resize_to(image_i, pair.colors_i.width(), pair.colors_i.height());
        pair.colors_j = resize_to(image_j, pair.colors_j.width(), pair.colors_j.height());
        return pair;
      }
    }
    return heuristic(image_i, image_j, view_i, view_j);
  }

 private:
  // Without a fixture: both views share the reference camera, depth grows
  // with darkness, 60-degree horizontal field of view at half resolution.
  static PairPointmap heuristic(const Image& image_i, const Image& image_j, int view_i,
                                int view_j) {
    const int w = std::max(1, image_i.width() / 2), h = std::max(1, image_i.height() / 2);
    const double f = 0.5 * w / std::tan(M_PI / 6.0);
    PairPointmap pair;
    pair.view_i = view_i;
    pair.view_j = view_j;
    auto build = [&](const Image& img, Image& pts, Image& conf, Image& col) {
      col = resize_to(img, w, h);
      pts = Image(w, h, 3);
      conf = Image(w, h, 1, 1.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double d = 1.0 + 2.0 * (1.0 - luminance(col, x, y));
          pts.at(x, y, 0) = d * (x - (w - 1) / 2.0) / f;
          pts.at(x, y, 1) = d * (y - (h - 1) / 2.0) / f;
          pts.at(x, y, 2) = d;
        }
      }
    };
    build(image_i, pair.pointmap_i, pair.confidence_i, pair.colors_i);
    build(image_j, pair.pointmap_j, pair.confidence_j, pair.colors_j);
    return pair;
  }

  MockOptions options_;
};

class MockInpainter final : public Inpainter {
 public:
  Image inpaint(const Image& rgb, const Mask& mask, const std::string& prompt,
                std::uint64_t seed) override {
    Image out = diffuse_fill(rgb, mask);
    add_texture(out, mask, 0.02, seed ^ derive_seed(0, prompt));
    return out;
  }
};

// Propagates finite values of `field` into pixels outside `valid`.
Image extrapolate(const Image& field, const Mask& valid) {
  Mask holes(field.width(), field.height());
  Image rgb(field.width(), field.height(), 3);
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      holes.set(x, y, !valid.at(x, y));
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = valid.at(x, y) ? field.at(x, y) : 0.0;
    }
  }
  const Image filled = diffuse_fill(rgb, holes);
  Image out(field.width(), field.height(), 1);
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) out.at(x, y) = filled.at(x, y, 0);
  return out;
}

class MockDepth final : public DepthEstimator {
 public:
  Image depth(const Image& rgb, const DepthHint* hint, std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    const double scale = 0.97 + 0.06 * unit_double(rng);
    const double shift = -0.2 + 0.4 * unit_double(rng);
    Image out(rgb.width(), rgb.height(), 1);
    if (hint && hint->valid.count() > 0) {
      if (hint->depth.width() != rgb.width() || hint->depth.height() != rgb.height()) {
        throw DimensionMismatch("depth hint does not match the image");
      }
      const Image dense = extrapolate(hint->depth, hint->valid);
      for (std::size_t k = 0; k < out.data().size(); ++k) {
        out.data()[k] = scale * dense.data()[k] + shift;
      }
      return out;
    }
    for (int y = 0; y < rgb.height(); ++y) {
      for (int x = 0; x < rgb.width(); ++x) out.at(x, y) = 1.0 + 2.0 * (1.0 - luminance(rgb, x, y));
    }
    return out;
  }
};

class MockConsistency final : public ConsistencyModel {
 public:
  std::vector<Image> rectify(std::span<const Image> views, const ConsistencyParams&,
                             std::uint64_t) override {
    return {views.begin(), views.end()};
  }
};

class MockGridInpainter final : public GridInpainter {
 public:
  Image grid_inpaint(const Image& composite, const Mask& mask, const GridInpaintParams& params,
                     std::uint64_t seed) override {
    const Image base = diffuse_fill(composite, mask);
    // Average of per-pass textures, amplitude proportional to the noise level.
    Image sum(base.width(), base.height(), base.channels());
    const int passes = std::max(1, params.denoise_passes);
    for (int p = 0; p < passes; ++p) {
      Image pass = base;
      add_texture(pass, mask, 0.1 * params.noise_level, seed + static_cast<std::uint64_t>(p));
      for (std::size_t k = 0; k < sum.data().size(); ++k) sum.data()[k] += pass.data()[k];
    }
    Image out = base;
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        if (!mask.at(x, y)) continue;
        for (int c = 0; c < out.channels(); ++c) out.at(x, y, c) = sum.at(x, y, c) / passes;
      }
    }
    return out;
  }
};

class MockUpscaler final : public Upscaler {
 public:
  Image upscale(const Image& rgb, int factor, std::uint64_t) override {
    return upscale_nearest(rgb, factor);
  }
};

}  // namespace

Image diffuse_fill(const Image& rgb, const Mask& mask, int iterations) {
  const int w = rgb.width(), h = rgb.height(), ch = rgb.channels();
  if (mask.width() != w || mask.height() != h) throw DimensionMismatch("mask does not match image");
  Image out = rgb;
  std::vector<std::uint8_t> known(static_cast<std::size_t>(w) * h);
  std::deque<std::pair<int, int>> frontier;
  const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) known[static_cast<std::size_t>(y) * w + x] = !mask.at(x, y);
  }
  if (mask.count() == mask.pixel_count()) {
    for (auto& v : out.data()) v = 0.5;
    return out;
  }
  // Layered fill: each unknown pixel takes the mean of its known neighbours,
  // processed in breadth-first order from the mask boundary.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (known[static_cast<std::size_t>(y) * w + x]) continue;
      for (int k = 0; k < 4; ++k) {
        const int xx = x + dx[k], yy = y + dy[k];
        if (xx >= 0 && yy >= 0 && xx < w && yy < h && known[static_cast<std::size_t>(yy) * w + xx]) {
          frontier.emplace_back(x, y);
          break;
        }
      }
    }
  }
  while (!frontier.empty()) {
    std::vector<std::pair<int, int>> layer(frontier.begin(), frontier.end());
    frontier.clear();
    std::vector<double> values(layer.size() * ch, 0.0);
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const auto [x, y] = layer[i];
      int n = 0;
      for (int k = 0; k < 4; ++k) {
        const int xx = x + dx[k], yy = y + dy[k];
        if (xx < 0 || yy < 0 || xx >= w || yy >= h || !known[static_cast<std::size_t>(yy) * w + xx]) continue;
        for (int c = 0; c < ch; ++c) values[i * ch + c] += out.at(xx, yy, c);
        ++n;
      }
      for (int c = 0; c < ch; ++c) values[i * ch + c] /= n;
    }
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const auto [x, y] = layer[i];
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = values[i * ch + c];
      known[static_cast<std::size_t>(y) * w + x] = 1;
    }
    for (const auto& [x, y] : layer) {
      for (int k = 0; k < 4; ++k) {
        const int xx = x + dx[k], yy = y + dy[k];
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        auto& flag = known[static_cast<std::size_t>(yy) * w + xx];
        if (flag == 0) {
          flag = 2;  // queued
          frontier.emplace_back(xx, yy);
        }
      }
    }
    for (const auto& [x, y] : frontier) known[static_cast<std::size_t>(y) * w + x] = 0;
  }
  // Smooth the filled region.
  const int passes = iterations > 0 ? iterations : 20;
  for (int it = 0; it < passes; ++it) {
    Image next = out;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!mask.at(x, y)) continue;
        for (int c = 0; c < ch; ++c) {
          double sum = 0.0;
          int n = 0;
          for (int k = 0; k < 4; ++k) {
            const int xx = x + dx[k], yy = y + dy[k];
            if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
            sum += out.at(xx, yy, c);
            ++n;
          }
          next.at(x, y, c) = sum / n;
        }
      }
    }
    out = std::move(next);
  }
  return out;
}

std::unique_ptr<PromptEngine> make_mock_prompt_engine() { return std::make_unique<MockPromptEngine>(); }
std::unique_ptr<Generator> make_mock_generator() { return std::make_unique<MockGenerator>(); }
std::unique_ptr<Evaluator> make_mock_evaluator() { return std::make_unique<MockEvaluator>(); }
std::unique_ptr<GeometryPrior> make_mock_geometry(const MockOptions& options) {
  return std::make_unique<MockGeometry>(options);
}
std::unique_ptr<Inpainter> make_mock_inpainter() { return std::make_unique<MockInpainter>(); }
std::unique_ptr<DepthEstimator> make_mock_depth() { return std::make_unique<MockDepth>(); }
std::unique_ptr<ConsistencyModel> make_mock_consistency() {
  return std::make_unique<MockConsistency>();
}
std::unique_ptr<GridInpainter> make_mock_grid_inpainter() {
  return std::make_unique<MockGridInpainter>();
}
std::unique_ptr<Upscaler> make_mock_upscaler() { return std::make_unique<MockUpscaler>(); }

}  // namespace glados
