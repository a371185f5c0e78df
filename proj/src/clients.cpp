#include "glados/clients.hpp"

#include <cmath>
#include <sstream>

#include "glados/error.hpp"
#include "glados/seeds.hpp"

namespace glados {

namespace {

void require_shape(const Image& got, int w, int h, int c, const char* what) {
  if (got.width() != w || got.height() != h || got.channels() != c) {
    std::ostringstream msg;
    msg << what << " has shape " << got.width() << "x" << got.height() << "x" << got.channels()
        << ", expected " << w << "x" << h << "x" << c;
    throw MalformedFile(msg.str());
  }
}

// Unmasked pixels always keep the request's values.
Image keep_unmasked(const Image& input, const Image& output, const Mask& mask) {
  Image out = output;
  for (int y = 0; y < input.height(); ++y) {
    for (int x = 0; x < input.width(); ++x) {
      if (mask.at(x, y)) continue;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = input.at(x, y, c);
    }
  }
  return out;
}

// Depth and pointmaps travel as float32; rounding here keeps mock and remote
// modes interchangeable.
Image round_f32(Image img) {
  for (double& v : img.data()) v = static_cast<float>(v);
  return img;
}

template <typename F>
auto guarded(const char* stage, F&& body) {
  try {
    return body();
  } catch (const ClientError&) {
    throw;
  } catch (const std::exception& e) {
    throw ClientError(stage, e.what());
  }
}

template <typename T>
void require_client(const std::unique_ptr<T>& c, const char* stage) {
  if (!c) throw ClientError(stage, "no client configured");
}

}  // namespace

EndpointMap parse_endpoint_list(const std::string& text) {
  EndpointMap out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw ConfigError("endpoint '" + item + "' is not STAGE=URL");
    }
    const std::string stage = item.substr(0, eq);
    bool known = false;
    for (const char* s : kClientStages) known = known || stage == s;
    if (!known) throw ConfigError("unknown client stage '" + stage + "'");
    out[stage] = item.substr(eq + 1);
  }
  return out;
}

PriorClients::PriorClients() = default;
PriorClients::PriorClients(PriorClients&&) noexcept = default;
PriorClients& PriorClients::operator=(PriorClients&&) noexcept = default;
PriorClients::~PriorClients() = default;

PriorClients PriorClients::mock(const MockOptions& options) { return from_endpoints({}, options); }

PriorClients PriorClients::from_endpoints(const EndpointMap& endpoints,
                                          const MockOptions& options) {
  PriorClients c;
  auto url_for = [&](const char* stage) -> std::optional<std::string> {
    const auto it = endpoints.find(stage);
    if (it == endpoints.end() || it->second == "mock") return std::nullopt;
    return it->second;
  };
  auto mode = [](const std::optional<std::string>& url) { return url ? *url : "mock"; };
  auto u = url_for("prompt");
  c.set_prompt_engine(u ? make_remote_prompt_engine(*u) : make_mock_prompt_engine(), mode(u));
  u = url_for("generate");
  c.set_generator(u ? make_remote_generator(*u) : make_mock_generator(), mode(u));
  u = url_for("score");
  c.set_evaluator(u ? make_remote_evaluator(*u) : make_mock_evaluator(), mode(u));
  u = url_for("pointmaps");
  c.set_geometry(u ? make_remote_geometry(*u) : make_mock_geometry(options), mode(u));
  u = url_for("inpaint");
  c.set_inpainter(u ? make_remote_inpainter(*u) : make_mock_inpainter(), mode(u));
  u = url_for("depth");
  c.set_depth(u ? make_remote_depth(*u) : make_mock_depth(), mode(u));
  u = url_for("consistency");
  c.set_consistency(u ? make_remote_consistency(*u) : make_mock_consistency(), mode(u));
  u = url_for("grid_inpaint");
  c.set_grid_inpainter(u ? make_remote_grid_inpainter(*u) : make_mock_grid_inpainter(), mode(u));
  u = url_for("upscale");
  c.set_upscaler(u ? make_remote_upscaler(*u) : make_mock_upscaler(), mode(u));
  return c;
}

void PriorClients::set_prompt_engine(std::unique_ptr<PromptEngine> c, std::string mode) {
  prompt_ = std::move(c);
  modes_["prompt"] = std::move(mode);
}
void PriorClients::set_generator(std::unique_ptr<Generator> c, std::string mode) {
  generator_ = std::move(c);
  modes_["generate"] = std::move(mode);
}
void PriorClients::set_evaluator(std::unique_ptr<Evaluator> c, std::string mode) {
  evaluator_ = std::move(c);
  modes_["score"] = std::move(mode);
}
void PriorClients::set_geometry(std::unique_ptr<GeometryPrior> c, std::string mode) {
  geometry_ = std::move(c);
  modes_["pointmaps"] = std::move(mode);
}
void PriorClients::set_inpainter(std::unique_ptr<Inpainter> c, std::string mode) {
  inpainter_ = std::move(c);
  modes_["inpaint"] = std::move(mode);
}
void PriorClients::set_depth(std::unique_ptr<DepthEstimator> c, std::string mode) {
  depth_ = std::move(c);
  modes_["depth"] = std::move(mode);
}
void PriorClients::set_consistency(std::unique_ptr<ConsistencyModel> c, std::string mode) {
  consistency_ = std::move(c);
  modes_["consistency"] = std::move(mode);
}
void PriorClients::set_grid_inpainter(std::unique_ptr<GridInpainter> c, std::string mode) {
  grid_ = std::move(c);
  modes_["grid_inpaint"] = std::move(mode);
}
void PriorClients::set_upscaler(std::unique_ptr<Upscaler> c, std::string mode) {
  upscaler_ = std::move(c);
  modes_["upscale"] = std::move(mode);
}

void PriorClients::record(nlohmann::json entry) {
  entry["call"] = log_.size();
  entry["mode"] = modes_[entry["stage"].get<std::string>()];
  log_.push_back(std::move(entry));
}

void PriorClients::flush_log(const std::filesystem::path& path) {
  std::string text;
  if (std::filesystem::exists(path)) text = read_text_file(path);
  for (const auto& e : log_) text += e.dump() + "\n";
  write_text_file(path, text);
  log_.clear();
}

std::string PriorClients::prompt(const Image& i1, const Image& i2, const std::string& meta_prompt,
                                 std::uint64_t seed) {
  require_client(prompt_, "prompt");
  auto out = guarded("prompt", [&] {
    auto text = prompt_->prompt(quantize8(i1), quantize8(i2), meta_prompt, seed);
    if (text.empty()) throw MalformedFile("empty prompt");
    return text;
  });
  record({{"stage", "prompt"}, {"seed", seed}, {"meta_prompt_sha256", sha256_hex(meta_prompt)}});
  return out;
}

Image PriorClients::generate(const Image& i1, const Image& i2, const std::string& prompt,
                             std::uint64_t seed) {
  require_client(generator_, "generate");
  auto out = guarded("generate", [&] {
    if (!i1.same_shape(i2)) throw DimensionMismatch("input images differ in shape");
    Image img = generator_->generate(quantize8(i1), quantize8(i2), prompt, seed);
    require_shape(img, i1.width(), i1.height(), 3, "generated image");
    return quantize8(img);
  });
  record({{"stage", "generate"}, {"seed", seed}});
  return out;
}

std::vector<double> PriorClients::score(std::span<const Image> candidates, const Image& i1,
                                        const Image& i2, std::uint64_t seed) {
  require_client(evaluator_, "score");
  auto out = guarded("score", [&] {
    std::vector<Image> q;
    for (const auto& c : candidates) q.push_back(quantize8(c));
    auto scores = evaluator_->score(q, quantize8(i1), quantize8(i2), seed);
    if (scores.size() != candidates.size()) {
      throw MalformedFile("expected " + std::to_string(candidates.size()) + " scores, got " +
                          std::to_string(scores.size()));
    }
    for (double s : scores) {
      if (!std::isfinite(s)) throw MalformedFile("non-finite score");
    }
    return scores;
  });
  record({{"stage", "score"}, {"seed", seed}, {"candidates", candidates.size()}});
  return out;
}

PairPointmap PriorClients::pointmaps(const Image& image_i, const Image& image_j, int view_i,
                                     int view_j, std::uint64_t seed) {
  require_client(geometry_, "pointmaps");
  auto out = guarded("pointmaps", [&] {
    auto pair = geometry_->pointmaps(quantize8(image_i), quantize8(image_j), view_i, view_j, seed);
    pair.validate();
    for (Image* m : {&pair.pointmap_i, &pair.confidence_i, &pair.colors_i, &pair.pointmap_j,
                     &pair.confidence_j, &pair.colors_j}) {
      *m = round_f32(std::move(*m));
    }
    if (pair.view_i != view_i || pair.view_j != view_j) {
      throw MalformedFile("pointmap view ids do not match the request");
    }
    return pair;
  });
  record({{"stage", "pointmaps"}, {"seed", seed}, {"view_i", view_i}, {"view_j", view_j}});
  return out;
}

Image PriorClients::inpaint(const Image& rgb, const Mask& mask, const std::string& prompt,
                            std::uint64_t seed) {
  require_client(inpainter_, "inpaint");
  const Image input = quantize8(rgb);
  auto out = guarded("inpaint", [&] {
    if (mask.width() != rgb.width() || mask.height() != rgb.height()) {
      throw DimensionMismatch("mask does not match image");
    }
    Image img = inpainter_->inpaint(input, mask, prompt, seed);
    require_shape(img, rgb.width(), rgb.height(), 3, "inpainted image");
    return keep_unmasked(input, quantize8(img), mask);
  });
  record({{"stage", "inpaint"}, {"seed", seed}, {"masked_pixels", mask.count()}});
  return out;
}

Image PriorClients::depth(const Image& rgb, const DepthHint* hint, std::uint64_t seed) {
  require_client(depth_, "depth");
  auto out = guarded("depth", [&] {
    std::optional<DepthHint> rounded;
    if (hint) rounded = DepthHint{round_f32(hint->depth), hint->valid};
    Image d = depth_->depth(quantize8(rgb), rounded ? &*rounded : nullptr, seed);
    require_shape(d, rgb.width(), rgb.height(), 1, "depth map");
    return round_f32(std::move(d));
  });
  record({{"stage", "depth"}, {"seed", seed}, {"hint", hint != nullptr}});
  return out;
}

std::vector<Image> PriorClients::rectify(std::span<const Image> views,
                                         const ConsistencyParams& params, std::uint64_t seed) {
  require_client(consistency_, "consistency");
  auto out = guarded("consistency", [&] {
    if (params.noise_steps < 1 || params.noise_steps > params.total_steps) {
      throw InvalidArgument("noise_steps must be in [1, total_steps]");
    }
    std::vector<Image> q;
    for (const auto& v : views) q.push_back(quantize8(v));
    auto result = consistency_->rectify(q, params, seed);
    if (result.size() != views.size()) throw MalformedFile("rectified view count differs");
    for (std::size_t i = 0; i < views.size(); ++i) {
      require_shape(result[i], views[i].width(), views[i].height(), 3, "rectified view");
      result[i] = quantize8(result[i]);
    }
    return result;
  });
  record({{"stage", "consistency"},
          {"seed", seed},
          {"views", views.size()},
          {"noise_steps", params.noise_steps},
          {"total_steps", params.total_steps},
          {"guidance", params.guidance},
          {"width", views.empty() ? 0 : views[0].width()},
          {"height", views.empty() ? 0 : views[0].height()}});
  return out;
}

Image PriorClients::grid_inpaint(const Image& composite, const Mask& mask,
                                 const GridInpaintParams& params, std::uint64_t seed) {
  require_client(grid_, "grid_inpaint");
  const Image input = quantize8(composite);
  auto out = guarded("grid_inpaint", [&] {
    if (mask.width() != composite.width() || mask.height() != composite.height()) {
      throw DimensionMismatch("mask does not match composite");
    }
    Image img = grid_->grid_inpaint(input, mask, params, seed);
    require_shape(img, composite.width(), composite.height(), 3, "inpainted grid");
    return keep_unmasked(input, quantize8(img), mask);
  });
  record({{"stage", "grid_inpaint"},
          {"seed", seed},
          {"noise_level", params.noise_level},
          {"denoise_passes", params.denoise_passes},
          {"masked_pixels", mask.count()}});
  return out;
}

Image PriorClients::upscale(const Image& rgb, int factor, std::uint64_t seed) {
  require_client(upscaler_, "upscale");
  auto out = guarded("upscale", [&] {
    if (factor < 1) throw InvalidArgument("upscale factor must be >= 1");
    Image img = upscaler_->upscale(quantize8(rgb), factor, seed);
    require_shape(img, rgb.width() * factor, rgb.height() * factor, 3, "upscaled image");
    return quantize8(img);
  });
  record({{"stage", "upscale"}, {"seed", seed}, {"factor", factor}});
  return out;
}

}  // namespace glados
