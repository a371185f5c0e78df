#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glados/coarse_alignment.hpp"
#include "glados/gaussian_scene.hpp"
#include "glados/image.hpp"
#include "glados/pose_math.hpp"

namespace glados {

enum class TextureStyle { kFlat, kChecker, kGradient };

std::string to_string(TextureStyle style);
TextureStyle parse_texture_style(const std::string& text);

// Box room of splats seen from its centre by two cameras turned apart by
// `separation_deg` and shifted sideways by `baseline`.
struct SyntheticSceneSpec {
  std::uint64_t seed = 0;
  Vec3 extent{3.0, 1.5, 3.0};  // room half-sizes
  int primitive_count = 4000;
  TextureStyle texture = TextureStyle::kChecker;
  double separation_deg = 150.0;
  double baseline = 0.2;
  int image_size = 64;
  double hfov_deg = 60.0;
  double pointmap_noise = 0.0;  // additive Gaussian sigma, world units

  void validate() const;
};

nlohmann::json to_json(const SyntheticSceneSpec& spec);
SyntheticSceneSpec synthetic_spec_from_json(const nlohmann::json& j);

// View ids shared by the pointmaps: first input, midpoint, second input.
inline constexpr int kFirstInputView = 0;
inline constexpr int kMidpointView = 1;
inline constexpr int kSecondInputView = 2;

struct SyntheticScene {
  GaussianScene ground_truth;
  std::array<CameraView, 3> views;  // indexed by view id
  std::array<Image, 2> pair_images;  // renders at views 0 and 2
  std::vector<PairPointmap> pointmaps;  // (0,1), (1,0), (1,2), (2,1)
  double scene_scale = 1.0;

  const CameraView& input_view(int k) const { return views[k == 0 ? 0 : 2]; }
};

// Bounding-box diagonal of the primitive means.
double scene_scale(const GaussianScene& scene);

// True when no primitive mean lies in both frusta while unoccluded in both.
// Occlusion compares the point depth with the rendered depth at its pixel,
// tolerance max(1e-3 of the scene scale, 3 sigma of the primitive).
bool verify_disjoint(const GaussianScene& scene, const CameraView& a, const CameraView& b);

// Throws CannotSeparate when the two input views share a visible primitive.
SyntheticScene generate(const SyntheticSceneSpec& spec);

// Desk-scale benchmark: scene k uses seed k and cycles through the texture
// styles; everything else is the default spec.
inline constexpr int kBenchmarkScenes = 22;
SyntheticSceneSpec benchmark_spec(int index);

// Pointmap of `view` in the camera frame of `reference`, at pointmap
// resolution: each pixel holds where its ray leaves through the room walls.
Image room_pointmap(const Vec3& extent, const CameraView& view, const CameraView& reference,
                    int width, int height);

// Scene bundle: gt.ply, views.json, pair/{view0.png, view1.png, poses.json},
// pointmaps/pair_<i>_<j>.ppmp.
void write_bundle(const std::filesystem::path& dir, const SyntheticScene& scene,
                  const SyntheticSceneSpec& spec);

struct InputPair {
  std::array<Image, 2> images;
  std::optional<std::array<CameraView, 2>> poses;
  std::optional<std::filesystem::path> pointmap_dir;
};

// Reads the pair (and pointmaps when present) back from a bundle directory.
InputPair read_bundle(const std::filesystem::path& dir);

}  // namespace glados
