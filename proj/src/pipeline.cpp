#include "glados/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "glados/config.hpp"
#include "glados/error.hpp"
#include "glados/meta_prompt.hpp"
#include "glados/seeds.hpp"

namespace glados {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig::RunConfig() {
  expansion.mcs_width = 0;
  expansion.mcs_height = 0;
}

void RunConfig::validate() const {
  if (bundle && images) throw ConfigError("give either a bundle or two images, not both");
  if (bridge_candidates < 1) throw ConfigError("bridge.candidates must be >= 1");
  if (coarse_opt_steps < 1) throw ConfigError("coarse.opt_steps must be >= 1");
  if (trajectory_n < 1) throw ConfigError("trajectory_n must be >= 1");
  if (views_per_step < 0) throw ConfigError("views_per_step must be >= 0");
  if (expansion.mcs_width < 0 || expansion.mcs_height < 0) {
    throw ConfigError("expansion.mcs_resolution must be >= 0");
  }
  if (scene_id.empty()) throw ConfigError("scene_id must not be empty");
  try {
    ExpansionConfig e = expansion;
    e.trajectory = {CameraView()};
    e.mcs_width = std::max(1, e.mcs_width);
    e.mcs_height = std::max(1, e.mcs_height);
    e.validate();
    refinement.validate();
    synth.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

template <class T>
T get(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace

void apply_config(RunConfig& c, const json& flat) {
  json synth = to_json(c.synth);
  bool synth_touched = false;
  for (const auto& [key, v] : flat.items()) {
    if (key == "seed") c.seed = get<std::uint64_t>(v, key);
    else if (key == "out") c.out = get<std::string>(v, key);
    else if (key == "mock") c.mock = get<bool>(v, key);
    else if (key == "scene_id") c.scene_id = get<std::string>(v, key);
    else if (key == "trajectory_n") c.trajectory_n = get<int>(v, key);
    else if (key == "views_per_step") c.views_per_step = get<int>(v, key);
    else if (key == "input.bundle") c.bundle = get<std::string>(v, key);
    else if (key == "input.images") {
      if (!v.is_array() || v.size() != 2) throw ConfigError("input.images must list two paths");
      c.images = std::array<fs::path, 2>{get<std::string>(v[0], key), get<std::string>(v[1], key)};
    } else if (key.rfind("endpoints.", 0) == 0) {
      const std::string stage = key.substr(10);
      parse_endpoint_list(stage + "=" + get<std::string>(v, key));
      c.endpoints[stage] = get<std::string>(v, key);
    } else if (key == "bridge.candidates") c.bridge_candidates = get<int>(v, key);
    else if (key == "coarse.opt_steps") c.coarse_opt_steps = get<int>(v, key);
    else if (key == "coarse.max_iterations") c.alignment.max_iterations = get<int>(v, key);
    else if (key == "coarse.fused_quantile") c.alignment.fused_quantile = get<double>(v, key);
    else if (key == "expansion.subsample") c.expansion.subsample = get<int>(v, key);
    else if (key == "expansion.hole_alpha_threshold") c.expansion.hole_alpha_threshold = get<double>(v, key);
    else if (key == "expansion.significant_hole_ratio") c.expansion.significant_hole_ratio = get<double>(v, key);
    else if (key == "expansion.inject_opt_steps") c.expansion.inject_opt_steps = get<int>(v, key);
    else if (key == "expansion.stride") c.expansion.stride = get<int>(v, key);
    else if (key == "mcs.views") c.expansion.mcs_views = get<int>(v, key);
    else if (key == "mcs.resolution") {
      if (v.is_array() && v.size() == 2) {
        c.expansion.mcs_width = get<int>(v[0], key);
        c.expansion.mcs_height = get<int>(v[1], key);
      } else {
        c.expansion.mcs_width = c.expansion.mcs_height = get<int>(v, key);
      }
    } else if (key == "mcs.noise_steps") c.expansion.mcs_noise_steps = get<int>(v, key);
    else if (key == "mcs.total_steps") c.expansion.mcs_total_steps = get<int>(v, key);
    else if (key == "mcs.opt_steps") c.expansion.mcs_opt_steps = get<int>(v, key);
    else if (key == "mcs.center_lr") c.expansion.mcs_center_lr = get<double>(v, key);
    else if (key == "refinement.cycles") c.refinement.cycles = get<int>(v, key);
    else if (key == "refinement.noise_start") c.refinement.noise_start = get<double>(v, key);
    else if (key == "refinement.noise_end") c.refinement.noise_end = get<double>(v, key);
    else if (key == "refinement.denoise_passes") c.refinement.denoise_passes = get<int>(v, key);
    else if (key == "refinement.opt_steps") c.refinement.opt_steps = get<int>(v, key);
    else if (key == "refinement.hole_alpha_threshold") c.refinement.hole_alpha_threshold = get<double>(v, key);
    else if (key == "refinement.upscale_factor") c.refinement.upscale_factor = get<int>(v, key);
    else if (key == "refinement.stride") c.refinement.stride = get<int>(v, key);
    else if (key == "synth.seed") c.synth_seed = get<std::uint64_t>(v, key);
    else if (key.rfind("synth.", 0) == 0 && synth.contains(key.substr(6)) && key != "synth.seed") {
      synth[key.substr(6)] = v;
      synth_touched = true;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (synth_touched) {
    try {
      c.synth = synthetic_spec_from_json(synth);
    } catch (const Error& e) {
      throw ConfigError(std::string("synth: ") + e.what());
    }
  }
}

EndpointMap resolve_endpoints(const RunConfig& config) {
  if (config.mock) return {};
  EndpointMap out;
  if (const char* env = std::getenv("GLADOS_ENDPOINTS")) out = parse_endpoint_list(env);
  for (const auto& [stage, url] : config.endpoints) out[stage] = url;
  return out;
}

json to_json(const RunConfig& c) {
  const auto endpoints = resolve_endpoints(c);
  json clients = json::object();
  for (const char* stage : kClientStages) {
    const auto it = endpoints.find(stage);
    clients[stage] = it == endpoints.end() ? "mock" : it->second;
  }
  json inputs = json::object();
  if (c.bundle) inputs["bundle"] = c.bundle->string();
  if (c.images) inputs["images"] = {(*c.images)[0].string(), (*c.images)[1].string()};
  if (!c.bundle && !c.images) inputs["synthesized"] = "synth";
  json synth = to_json(c.synth);
  synth["seed"] = c.synth_seed.value_or(c.seed);
  json expansion = to_json(c.expansion);
  expansion.erase("trajectory_views");
  return {{"seed", c.seed},
          {"out", c.out.string()},
          {"scene_id", c.scene_id},
          {"inputs", inputs},
          {"mock", c.mock},
          {"clients", clients},
          {"bridge", {{"candidates", c.bridge_candidates},
                      {"meta_prompt_version", std::string(kMetaPromptVersion)}}},
          {"coarse", {{"max_iterations", c.alignment.max_iterations},
                      {"initial_step", c.alignment.initial_step},
                      {"max_halvings", c.alignment.max_halvings},
                      {"fused_quantile", c.alignment.fused_quantile},
                      {"opt_steps", c.coarse_opt_steps}}},
          {"trajectory_n", c.trajectory_n},
          {"views_per_step", c.views_per_step},
          {"expansion", expansion},
          {"refinement", to_json(c.refinement)},
          {"synth", synth}};
}

PriorClients make_clients(const RunConfig& config, const std::optional<fs::path>& pointmap_dir) {
  MockOptions options;
  options.pointmap_dir = pointmap_dir;
  return PriorClients::from_endpoints(resolve_endpoints(config), options);
}

namespace {

struct RunPaths {
  explicit RunPaths(const fs::path& root) : root(root) {}
  fs::path root;
  fs::path inputs() const { return root / "inputs"; }
  fs::path bridge() const { return root / "bridge"; }
  fs::path coarse() const { return root / "coarse"; }
  fs::path expand() const { return root / "expand"; }
  fs::path mcs() const { return root / "mcs"; }
  fs::path refine() const { return root / "refine"; }
  fs::path eval() const { return root / "eval"; }
  fs::path run_log() const { return root / "run_log.jsonl"; }
  fs::path client_log() const { return root / "clients.jsonl"; }
  fs::path timings() const { return root / "timings.json"; }
  fs::path failure() const { return root / "failure.json"; }
};

void require(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("missing artifact: " + path.string());
}

void append_log(const RunPaths& paths, const json& entry) {
  fs::create_directories(paths.root);
  std::ofstream out(paths.run_log(), std::ios::app);
  out << entry.dump() << "\n";
}

json read_json(const fs::path& path) {
  require(path);
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw MalformedFile(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

// Flushes the client call log when a stage ends, also on failure.
class ClientLogFlush {
 public:
  ClientLogFlush(PriorClients& clients, fs::path path) : clients_(clients), path_(std::move(path)) {}
  ~ClientLogFlush() {
    try {
      clients_.flush_log(path_);
    } catch (...) {
    }
  }

 private:
  PriorClients& clients_;
  fs::path path_;
};

// Everything later stages need about the inputs and estimated cameras.
struct Context {
  Image first, anchor, second;
  std::optional<fs::path> pointmap_dir;
  std::string prompt;
  std::array<CameraView, 3> cameras;
  std::vector<Target> inputs;   // first, second at their cameras
  std::vector<Target> anchors;  // first, anchor, second (the expanded image set)
  std::vector<CameraView> trajectory;
  std::vector<CameraView> expansion_views;
  ExpansionConfig expansion;
  RefinementConfig refinement;
};

std::optional<fs::path> input_pointmap_dir(const RunPaths& paths) {
  const json meta = read_json(paths.inputs() / "inputs.json");
  if (meta.contains("pointmap_dir") && meta["pointmap_dir"].is_string()) {
    return fs::path(meta["pointmap_dir"].get<std::string>());
  }
  return std::nullopt;
}

Context load_context(const RunConfig& config, bool need_cameras) {
  const RunPaths paths(config.out);
  Context ctx;
  require(paths.inputs() / "image_1.png");
  require(paths.bridge() / "anchor.png");
  ctx.first = read_png_rgb(paths.inputs() / "image_1.png");
  ctx.second = read_png_rgb(paths.inputs() / "image_2.png");
  ctx.anchor = read_png_rgb(paths.bridge() / "anchor.png");
  ctx.prompt = read_text_file(paths.bridge() / "prompt.txt");
  ctx.pointmap_dir = input_pointmap_dir(paths);
  if (!need_cameras) return ctx;
  const auto cams = camera_views_from_json(read_json(paths.coarse() / "cameras.json"));
  if (cams.size() != 3) throw MalformedFile("cameras.json must hold three cameras");
  for (int k = 0; k < 3; ++k) ctx.cameras[k] = cams[k];
  ctx.inputs = {{ctx.cameras[0], ctx.first, std::nullopt}, {ctx.cameras[2], ctx.second, std::nullopt}};
  ctx.anchors = {{ctx.cameras[0], ctx.first, std::nullopt},
                 {ctx.cameras[1], ctx.anchor, std::nullopt},
                 {ctx.cameras[2], ctx.second, std::nullopt}};
  ctx.trajectory = evaluation_trajectory(ctx.cameras[0], ctx.cameras[2], config.trajectory_n);
  ctx.expansion = config.expansion;
  ctx.expansion.trajectory = ctx.trajectory;
  if (ctx.expansion.mcs_width == 0) ctx.expansion.mcs_width = ctx.first.width();
  if (ctx.expansion.mcs_height == 0) ctx.expansion.mcs_height = ctx.first.height();
  ctx.expansion.views_per_step = config.views_per_step;
  for (int i : ctx.expansion.expansion_indices()) ctx.expansion_views.push_back(ctx.trajectory[i]);
  ctx.refinement = config.refinement;
  ctx.refinement.views_per_step = config.views_per_step;
  return ctx;
}

// Photometric error on the inputs and hole ratio over the expansion views.
json stage_metrics(const GaussianScene& scene, const Context& ctx) {
  const double p0 = photometric_error(scene, ctx.inputs[0].view, ctx.inputs[0].image).error;
  const double p1 = photometric_error(scene, ctx.inputs[1].view, ctx.inputs[1].image).error;
  return {{"photo_errors", {p0, p1}},
          {"photo_error", 0.5 * (p0 + p1)},
          {"mean_hole_ratio", mean_hole_ratio(scene, ctx.expansion_views, kEvalHoleAlpha)},
          {"primitives", scene.size()}};
}

void record_timing(const RunPaths& paths, const std::string& stage, double seconds) {
  json t = fs::exists(paths.timings()) ? read_json(paths.timings()) : json::object();
  t[stage] = seconds;
  write_json(paths.timings(), t);
}

template <class F>
auto timed(const RunPaths& paths, const std::string& stage, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  struct Done {
    const RunPaths& paths;
    const std::string& stage;
    std::chrono::steady_clock::time_point start;
    ~Done() {
      try {
        record_timing(paths, stage,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      } catch (...) {
      }
    }
  } done{paths, stage, start};
  return f();
}

json resolved_config(const RunConfig& config) {
  json j = to_json(config);
  const fs::path first = RunPaths(config.out).inputs() / "image_1.png";
  if (config.expansion.mcs_width == 0 && fs::exists(first)) {
    const Image img = read_png_rgb(first);
    j["expansion"]["mcs_resolution"] = {img.width(), img.height()};
  }
  return j;
}

}  // namespace

void stage_synth(const RunConfig& config, const fs::path& dir) {
  SyntheticSceneSpec spec = config.synth;
  spec.seed = config.synth_seed.value_or(config.seed);
  const auto scene = generate(spec);
  write_bundle(dir, scene, spec);
}

void stage_bridge(const RunConfig& config) {
  config.validate();
  const RunPaths paths(config.out);
  std::array<Image, 2> images;
  json meta = json::object();
  if (config.images) {
    for (int k = 0; k < 2; ++k) {
      require((*config.images)[k]);
      images[k] = read_png_rgb((*config.images)[k]);
    }
    meta["source"] = "images";
    meta["pointmap_dir"] = nullptr;
  } else {
    fs::path bundle;
    if (config.bundle) {
      bundle = *config.bundle;
    } else {
      bundle = paths.root / "synth";
      stage_synth(config, bundle);
    }
    InputPair pair = read_bundle(bundle);
    images = pair.images;
    meta["source"] = config.bundle ? "bundle" : "synthesized";
    meta["pointmap_dir"] = pair.pointmap_dir ? json(pair.pointmap_dir->string()) : json(nullptr);
    if (pair.poses) meta["poses"] = to_json(std::vector<CameraView>{(*pair.poses)[0], (*pair.poses)[1]});
  }
  if (images[0].width() != images[1].width() || images[0].height() != images[1].height()) {
    throw ConfigError("the two input images differ in size");
  }
  write_png_rgb8(paths.inputs() / "image_1.png", images[0]);
  write_png_rgb8(paths.inputs() / "image_2.png", images[1]);
  write_json(paths.inputs() / "inputs.json", meta);
  write_json(paths.root / "config.resolved.json", resolved_config(config));

  auto clients = make_clients(config, std::nullopt);
  ClientLogFlush flush(clients, paths.client_log());
  const auto first = read_png_rgb(paths.inputs() / "image_1.png");
  const auto second = read_png_rgb(paths.inputs() / "image_2.png");
  const auto result =
      bridge(first, second, clients, config.bridge_candidates, derive_seed(config.seed, "bridge"));
  write_bridge(paths.bridge(), result);
  write_json(paths.root / "run.json",
             {{"scene_id", config.scene_id},
              {"seed", config.seed},
              {"expanded_image_set",
               {"inputs/image_1.png", "bridge/anchor.png", "inputs/image_2.png"}},
              {"client_modes", clients.modes()}});
  append_log(paths, {{"stage", "bridge"},
                     {"candidates", result.candidates.size()},
                     {"scores", result.scores},
                     {"chosen_index", result.chosen_index},
                     {"meta_prompt_version", std::string(kMetaPromptVersion)}});
}

void stage_reconstruct(const RunConfig& config) {
  config.validate();
  const RunPaths paths(config.out);
  Context ctx = load_context(config, false);
  auto clients = make_clients(config, ctx.pointmap_dir);
  ClientLogFlush flush(clients, paths.client_log());
  const std::array<const Image*, 3> views = {&ctx.first, &ctx.anchor, &ctx.second};
  const std::array<std::pair<int, int>, 4> order = {{{0, 1}, {1, 0}, {1, 2}, {2, 1}}};
  std::vector<PairPointmap> pairs;
  for (const auto& [i, j] : order) {
    const std::string name = std::to_string(i) + "_" + std::to_string(j);
    pairs.push_back(clients.pointmaps(*views[i], *views[j], i, j,
                                      derive_seed(config.seed, "pointmaps." + name)));
    write_ppmp(paths.coarse() / "pointmaps" / ("pair_" + name + ".ppmp"), pairs.back());
  }
  const auto alignment = global_align(pairs, config.alignment);
  const Intrinsics k = estimate_intrinsics(pairs, ctx.first.width(), ctx.first.height());
  std::vector<CameraView> cams;
  for (int v = 0; v < 3; ++v) cams.push_back(alignment.camera(v, k));
  write_json(paths.coarse() / "cameras.json", to_json(cams));
  json scales = json::array();
  for (const auto& [edge, s] : alignment.scales) scales.push_back({edge.first, edge.second, s});
  write_json(paths.coarse() / "alignment.json",
             {{"residual", alignment.residual},
              {"iterations", alignment.iterations},
              {"converged", alignment.converged},
              {"scales", scales},
              {"confidence_threshold", alignment.confidence_threshold},
              {"fused_points", alignment.fused_points.size()}});
  const GaussianScene scaffold = scaffold_from_alignment(alignment);

  ctx = load_context(config, true);
  OptimizerConfig fit;
  fit.steps = config.coarse_opt_steps;
  fit.views_per_step = config.views_per_step;
  auto fitted = optimize(scaffold, ctx.anchors, fit);
  write_loss_csv(paths.coarse() / "loss.csv", fitted);
  save_scene(fitted.scene, paths.coarse() / "scene.ply");
  json record = fit_record("coarse", fit, ctx.anchors.size(), fitted);
  record["scaffold_primitives"] = scaffold.size();
  record["alignment_iterations"] = alignment.iterations;
  append_log(paths, record);
  write_json(paths.coarse() / "metrics.json", stage_metrics(load_scene(paths.coarse() / "scene.ply"), ctx));
}

void stage_expand(const RunConfig& config) {
  config.validate();
  const RunPaths paths(config.out);
  const Context ctx = load_context(config, true);
  require(paths.coarse() / "scene.ply");
  const GaussianScene coarse = load_scene(paths.coarse() / "scene.ply");
  auto clients = make_clients(config, ctx.pointmap_dir);
  ClientLogFlush flush(clients, paths.client_log());

  append_log(paths, {{"stage", "expand"}, {"event", "config"}, {"config", to_json(ctx.expansion)}});
  const auto expanded = expand(coarse, clients, ctx.expansion, ctx.prompt, ctx.anchors,
                               derive_seed(config.seed, "expand"), paths.expand());
  json events = json::array();
  for (const auto& e : expanded.events) events.push_back(to_json(e));
  write_json(paths.expand() / "events.json", events);
  for (const auto& f : expanded.fits) append_log(paths, f);
  save_scene(expanded.scene, paths.expand() / "scene.ply");
  const GaussianScene stored = load_scene(paths.expand() / "scene.ply");
  write_json(paths.expand() / "metrics.json", stage_metrics(stored, ctx));

  const auto mcs = mcs_refine(stored, clients, ctx.expansion, ctx.anchors,
                              derive_seed(config.seed, "mcs"), paths.mcs());
  json rec = mcs.fit;
  rec["view_indices"] = mcs.view_indices;
  append_log(paths, rec);
  save_scene(mcs.scene, paths.mcs() / "scene.ply");
  write_json(paths.mcs() / "metrics.json", stage_metrics(load_scene(paths.mcs() / "scene.ply"), ctx));
}

void stage_refine(const RunConfig& config) {
  config.validate();
  const RunPaths paths(config.out);
  const Context ctx = load_context(config, true);
  require(paths.mcs() / "scene.ply");
  const GaussianScene scene = load_scene(paths.mcs() / "scene.ply");
  auto clients = make_clients(config, ctx.pointmap_dir);
  ClientLogFlush flush(clients, paths.client_log());

  append_log(paths, {{"stage", "refine"}, {"event", "config"}, {"config", to_json(ctx.refinement)}});
  const auto refined = refine(scene, clients, ctx.refinement, ctx.inputs, ctx.anchors,
                              ctx.expansion_views, ctx.prompt, derive_seed(config.seed, "refine"),
                              paths.refine());
  json cycles = json::array();
  for (const auto& c : refined.cycles) {
    cycles.push_back(to_json(c));
    json entry = to_json(c);
    entry["stage"] = "refine";
    entry["event"] = "cycle";
    append_log(paths, entry);
  }
  write_json(paths.refine() / "cycles.json", cycles);
  for (const auto& f : refined.fits) append_log(paths, f);
  save_scene(refined.scene, paths.refine() / "scene.ply");
  write_json(paths.refine() / "metrics.json", stage_metrics(load_scene(paths.refine() / "scene.ply"), ctx));
}

namespace {

void write_report(const RunPaths& paths, const EvaluationReport& report) {
  write_json(paths.eval() / "report.json", to_json(report));
  const std::array<EvaluationReport, 1> one = {report};
  write_text_file(paths.eval() / "summary.csv", to_csv(aggregate(one)));
}

}  // namespace

EvaluationReport stage_evaluate(const RunConfig& config) {
  config.validate();
  const RunPaths paths(config.out);
  std::optional<fs::path> scene_path;
  std::string scene_stage;
  for (const auto& [stage, dir] : {std::pair{"refine", paths.refine()}, {"mcs", paths.mcs()},
                                   {"expand", paths.expand()}, {"coarse", paths.coarse()}}) {
    if (fs::exists(dir / "scene.ply")) {
      scene_path = dir / "scene.ply";
      scene_stage = stage;
      break;
    }
  }
  if (!scene_path) throw ConfigError("missing artifact: no scene.ply under " + paths.root.string());
  const Context ctx = load_context(config, true);
  const GaussianScene scene = load_scene(*scene_path);
  if (fs::exists(paths.eval() / "frames")) fs::remove_all(paths.eval() / "frames");
  EvaluationReport report;
  RunRecord record;
  record.final_primitives = scene.size();
  if (!scene.empty()) {
    report = evaluate_scene(config.scene_id, scene, ctx.inputs, config.trajectory_n,
                            paths.eval() / "frames");
    record.mean_trajectory_alpha = report.mean_alpha.value_or(0.0);
  }
  const auto verdict = detect_failure(record);
  if (verdict.failed) {
    report = failed_report(config.scene_id, verdict.reason);
  } else {
    json stages = json::object();
    for (const char* stage : {"coarse", "expand", "mcs", "refine"}) {
      const auto m = paths.root / stage / "metrics.json";
      if (fs::exists(m)) stages[stage] = read_json(m);
    }
    report.extra["scene_stage"] = scene_stage;
    report.extra["stages"] = stages;
    report.extra["primitives"] = scene.size();
    report.extra["expanded_image_set"] = {"inputs/image_1.png", "bridge/anchor.png",
                                          "inputs/image_2.png"};
  }
  write_report(paths, report);
  append_log(paths, {{"stage", "evaluate"}, {"failed", report.failed}, {"scene_stage", scene_stage}});
  return report;
}

namespace {

int fail_run(const RunPaths& paths, const RunConfig& config, const std::string& reason,
             const json& detail, int code) {
  try {
    write_json(paths.failure(), detail);
    write_report(paths, failed_report(config.scene_id, reason));
  } catch (...) {
  }
  std::cerr << "glados: " << reason << "\n";
  return code;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& config) {
  const RunPaths paths(config.out);
  try {
    config.validate();
    fs::create_directories(paths.root);
    if (command != "synth") write_json(paths.root / "config.resolved.json", resolved_config(config));
    if (command == "synth") {
      timed(paths, "synth", [&] { stage_synth(config, config.out); return 0; });
      return kExitOk;
    }
    if (command == "bridge" || command == "run") {
      timed(paths, "bridge", [&] { stage_bridge(config); return 0; });
    }
    if (command == "reconstruct" || command == "run") {
      timed(paths, "reconstruct", [&] { stage_reconstruct(config); return 0; });
    }
    if (command == "expand" || command == "run") {
      timed(paths, "expand", [&] { stage_expand(config); return 0; });
    }
    if (command == "refine" || command == "run") {
      timed(paths, "refine", [&] { stage_refine(config); return 0; });
    }
    if (command == "evaluate" || command == "run") {
      const auto report = timed(paths, "evaluate", [&] { return stage_evaluate(config); });
      if (report.failed) {
        std::cerr << "glados: reconstruction failed: " << report.failure_reason << "\n";
        return kExitReconstruction;
      }
      return kExitOk;
    }
    if (command == "bridge" || command == "reconstruct" || command == "expand" ||
        command == "refine") {
      return kExitOk;
    }
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ClientError& e) {
    return fail_run(paths, config, "client failure: " + e.stage(),
                    {{"stage", e.stage()}, {"detail", e.detail()}}, kExitClient);
  } catch (const EmptyAlignment& e) {
    return fail_run(paths, config, "empty coarse alignment", {{"error", e.what()}},
                    kExitReconstruction);
  } catch (const DisconnectedGraph& e) {
    return fail_run(paths, config, "disconnected pair graph", {{"error", e.what()}},
                    kExitReconstruction);
  } catch (const ConfigError& e) {
    std::cerr << "glados: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MalformedFile& e) {
    std::cerr << "glados: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "glados: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CannotSeparate& e) {
    std::cerr << "glados: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    return fail_run(paths, config, std::string("reconstruction error: ") + e.what(),
                    {{"error", e.what()}}, kExitReconstruction);
  }
}

}  // namespace glados
