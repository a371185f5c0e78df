#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "glados/coarse_alignment.hpp"
#include "glados/image.hpp"

namespace glados {

// The nine generative / geometric priors, one abstract interface each.
// Implementations may be in-process mocks or remote HTTP services; both see
// 8-bit-quantized images so they are interchangeable.

class PromptEngine {
 public:
  virtual ~PromptEngine() = default;
  virtual std::string prompt(const Image& i1, const Image& i2, const std::string& meta_prompt,
                             std::uint64_t seed) = 0;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual Image generate(const Image& i1, const Image& i2, const std::string& prompt,
                         std::uint64_t seed) = 0;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual std::vector<double> score(std::span<const Image> candidates, const Image& i1,
                                    const Image& i2, std::uint64_t seed) = 0;
};

class GeometryPrior {
 public:
  virtual ~GeometryPrior() = default;
  virtual PairPointmap pointmaps(const Image& image_i, const Image& image_j, int view_i,
                                 int view_j, std::uint64_t seed) = 0;
};

class Inpainter {
 public:
  virtual ~Inpainter() = default;
  virtual Image inpaint(const Image& rgb, const Mask& mask, const std::string& prompt,
                        std::uint64_t seed) = 0;
};

// Optional rendered-depth context sent along with a depth request.
struct DepthHint {
  Image depth;
  Mask valid;
};

class DepthEstimator {
 public:
  virtual ~DepthEstimator() = default;
  virtual Image depth(const Image& rgb, const DepthHint* hint, std::uint64_t seed) = 0;
};

struct ConsistencyParams {
  int noise_steps = 10;
  int total_steps = 50;
  bool guidance = false;
};

class ConsistencyModel {
 public:
  virtual ~ConsistencyModel() = default;
  virtual std::vector<Image> rectify(std::span<const Image> views,
                                     const ConsistencyParams& params, std::uint64_t seed) = 0;
};

struct GridInpaintParams {
  double noise_level = 0.2;
  int denoise_passes = 4;
  std::string prompt;
};

class GridInpainter {
 public:
  virtual ~GridInpainter() = default;
  virtual Image grid_inpaint(const Image& composite, const Mask& mask,
                             const GridInpaintParams& params, std::uint64_t seed) = 0;
};

class Upscaler {
 public:
  virtual ~Upscaler() = default;
  virtual Image upscale(const Image& rgb, int factor, std::uint64_t seed) = 0;
};

inline constexpr std::array<const char*, 9> kClientStages = {
    "prompt", "generate", "score", "pointmaps", "inpaint",
    "depth",  "consistency", "grid_inpaint", "upscale"};

struct MockOptions {
  // Directory holding pair_<i>_<j>.ppmp fixtures for the geometry mock.
  std::optional<std::filesystem::path> pointmap_dir;
};

// Stage name -> "mock" or a base URL ("http://host:port").
using EndpointMap = std::map<std::string, std::string>;

// Parses "stage=url,stage=url" (the GLADOS_ENDPOINTS format).
EndpointMap parse_endpoint_list(const std::string& text);

// Bundle of all priors. Every call quantizes images, validates the response
// shape, is appended to the call log, and surfaces failures as
// ClientError(stage, detail).
class PriorClients {
 public:
  PriorClients();
  PriorClients(PriorClients&&) noexcept;
  PriorClients& operator=(PriorClients&&) noexcept;
  ~PriorClients();

  // All stages mocked.
  static PriorClients mock(const MockOptions& options = {});
  // Stages listed in `endpoints` with a URL become remote; the rest mocks.
  static PriorClients from_endpoints(const EndpointMap& endpoints,
                                     const MockOptions& options = {});

  void set_prompt_engine(std::unique_ptr<PromptEngine> c, std::string mode);
  void set_generator(std::unique_ptr<Generator> c, std::string mode);
  void set_evaluator(std::unique_ptr<Evaluator> c, std::string mode);
  void set_geometry(std::unique_ptr<GeometryPrior> c, std::string mode);
  void set_inpainter(std::unique_ptr<Inpainter> c, std::string mode);
  void set_depth(std::unique_ptr<DepthEstimator> c, std::string mode);
  void set_consistency(std::unique_ptr<ConsistencyModel> c, std::string mode);
  void set_grid_inpainter(std::unique_ptr<GridInpainter> c, std::string mode);
  void set_upscaler(std::unique_ptr<Upscaler> c, std::string mode);

  std::string prompt(const Image& i1, const Image& i2, const std::string& meta_prompt,
                     std::uint64_t seed);
  Image generate(const Image& i1, const Image& i2, const std::string& prompt,
                 std::uint64_t seed);
  std::vector<double> score(std::span<const Image> candidates, const Image& i1, const Image& i2,
                            std::uint64_t seed);
  PairPointmap pointmaps(const Image& image_i, const Image& image_j, int view_i, int view_j,
                         std::uint64_t seed);
  Image inpaint(const Image& rgb, const Mask& mask, const std::string& prompt,
                std::uint64_t seed);
  Image depth(const Image& rgb, const DepthHint* hint, std::uint64_t seed);
  std::vector<Image> rectify(std::span<const Image> views, const ConsistencyParams& params,
                             std::uint64_t seed);
  Image grid_inpaint(const Image& composite, const Mask& mask, const GridInpaintParams& params,
                     std::uint64_t seed);
  Image upscale(const Image& rgb, int factor, std::uint64_t seed);

  // Stage -> "mock" or endpoint URL.
  const std::map<std::string, std::string>& modes() const noexcept { return modes_; }
  // One JSON object per call, in call order.
  const std::vector<nlohmann::json>& call_log() const noexcept { return log_; }
  void clear_log() { log_.clear(); }
  // Appends the call log as JSON lines and clears it.
  void flush_log(const std::filesystem::path& path);

 private:
  void record(nlohmann::json entry);

  std::unique_ptr<PromptEngine> prompt_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<Evaluator> evaluator_;
  std::unique_ptr<GeometryPrior> geometry_;
  std::unique_ptr<Inpainter> inpainter_;
  std::unique_ptr<DepthEstimator> depth_;
  std::unique_ptr<ConsistencyModel> consistency_;
  std::unique_ptr<GridInpainter> grid_;
  std::unique_ptr<Upscaler> upscaler_;
  std::map<std::string, std::string> modes_;
  std::vector<nlohmann::json> log_;
};

// Deterministic in-process priors. They make the pipeline runnable and
// reproducible; they claim no fidelity.
std::unique_ptr<PromptEngine> make_mock_prompt_engine();
std::unique_ptr<Generator> make_mock_generator();
std::unique_ptr<Evaluator> make_mock_evaluator();
std::unique_ptr<GeometryPrior> make_mock_geometry(const MockOptions& options);
std::unique_ptr<Inpainter> make_mock_inpainter();
std::unique_ptr<DepthEstimator> make_mock_depth();
std::unique_ptr<ConsistencyModel> make_mock_consistency();
std::unique_ptr<GridInpainter> make_mock_grid_inpainter();
std::unique_ptr<Upscaler> make_mock_upscaler();

// HTTP clients speaking the /v1 protocol against `base_url`.
std::unique_ptr<PromptEngine> make_remote_prompt_engine(const std::string& base_url);
std::unique_ptr<Generator> make_remote_generator(const std::string& base_url);
std::unique_ptr<Evaluator> make_remote_evaluator(const std::string& base_url);
std::unique_ptr<GeometryPrior> make_remote_geometry(const std::string& base_url);
std::unique_ptr<Inpainter> make_remote_inpainter(const std::string& base_url);
std::unique_ptr<DepthEstimator> make_remote_depth(const std::string& base_url);
std::unique_ptr<ConsistencyModel> make_remote_consistency(const std::string& base_url);
std::unique_ptr<GridInpainter> make_remote_grid_inpainter(const std::string& base_url);
std::unique_ptr<Upscaler> make_remote_upscaler(const std::string& base_url);

// Mask-respecting hole fill used by the inpainting mocks: masked pixels are
// replaced by iterated neighbour averages seeded from unmasked pixels;
// unmasked pixels are returned unchanged.
Image diffuse_fill(const Image& rgb, const Mask& mask, int iterations = 0);

}  // namespace glados
