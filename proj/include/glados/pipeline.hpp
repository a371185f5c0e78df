#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "glados/bridge.hpp"
#include "glados/clients.hpp"
#include "glados/coarse_alignment.hpp"
#include "glados/evaluation.hpp"
#include "glados/expansion.hpp"
#include "glados/refinement.hpp"
#include "glados/synthetic_data.hpp"

namespace glados {

struct RunConfig {
  // Inputs: a scene bundle or two images. With neither, the first stage
  // synthesizes a bundle into <out>/synth from `synth` (seeded by `seed`
  // unless synth_seed is set).
  std::optional<std::filesystem::path> bundle;
  std::optional<std::array<std::filesystem::path, 2>> images;
  bool mock = false;
  EndpointMap endpoints;  // stage -> URL; unlisted stages are mocked
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  std::string scene_id = "scene";

  int bridge_candidates = kDefaultCandidates;
  AlignmentConfig alignment;
  int coarse_opt_steps = 300;
  int trajectory_n = 200;
  // Targets per optimizer step in every fit (0 = all).
  int views_per_step = 1;
  // Expansion and MCS settings; the trajectory is filled in at run time and
  // an MCS resolution of 0 means the input image size.
  ExpansionConfig expansion;
  RefinementConfig refinement;
  SyntheticSceneSpec synth;
  std::optional<std::uint64_t> synth_seed;

  RunConfig();
  void validate() const;
};

// Overlays a flat "section.key" object (see parse_config_text) onto `config`.
// Unknown keys and wrongly typed values raise ConfigError.
void apply_config(RunConfig& config, const nlohmann::json& flat);

// Every effective parameter, with client modes resolved.
nlohmann::json to_json(const RunConfig& config);

// GLADOS_ENDPOINTS-style list merged under explicit endpoints.
EndpointMap resolve_endpoints(const RunConfig& config);

PriorClients make_clients(const RunConfig& config,
                          const std::optional<std::filesystem::path>& pointmap_dir);

// Stage commands over the run directory config.out. Each reads the previous
// stage's artifacts from disk, so running them in sequence equals `run`.
void stage_synth(const RunConfig& config, const std::filesystem::path& dir);
void stage_bridge(const RunConfig& config);
void stage_reconstruct(const RunConfig& config);
void stage_expand(const RunConfig& config);
void stage_refine(const RunConfig& config);
EvaluationReport stage_evaluate(const RunConfig& config);

// Runs one command ("synth", "bridge", "reconstruct", "expand", "refine",
// "evaluate" or "run") and maps failures onto exit codes: 0 success,
// 1 configuration or missing artifact, 2 prior client failure, 3
// reconstruction failure. Failed runs still write eval/report.json.
int run_command(const std::string& command, const RunConfig& config);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitClient = 2;
inline constexpr int kExitReconstruction = 3;

}  // namespace glados
