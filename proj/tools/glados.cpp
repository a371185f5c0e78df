#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "glados/config.hpp"
#include "glados/error.hpp"
#include "glados/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  bool mock = false;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> endpoints;
  int trajectory_n = 200;
  std::string bundle;
  std::vector<std::string> images;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "TOML-style run configuration");
  app->add_flag("--mock", f.mock, "use in-process mock priors for every client");
  app->add_option("--seed", f.seed, "run seed");
  app->add_option("--out", f.out, "run (or bundle) output directory");
  app->add_option("--endpoint", f.endpoints, "STAGE=URL, repeatable");
  app->add_option("--trajectory-n", f.trajectory_n, "evaluation trajectory length");
  app->add_option("--bundle", f.bundle, "synthetic scene bundle to reconstruct");
  app->add_option("--images", f.images, "the two input images")->expected(2);
}

// Defaults, then the config file, then flags.
glados::RunConfig resolve(const CLI::App* app, const Flags& f) {
  glados::RunConfig c;
  if (!f.config.empty()) glados::apply_config(c, glados::parse_config_file(f.config));
  if (app->count("--mock") > 0) c.mock = true;
  if (app->count("--seed") > 0) c.seed = f.seed;
  if (app->count("--out") > 0) c.out = f.out;
  if (app->count("--trajectory-n") > 0) c.trajectory_n = f.trajectory_n;
  if (app->count("--bundle") > 0) {
    c.bundle = f.bundle;
    c.images.reset();
  }
  if (app->count("--images") > 0) {
    c.images = std::array<std::filesystem::path, 2>{f.images[0], f.images[1]};
    c.bundle.reset();
  }
  for (const auto& e : f.endpoints) {
    for (const auto& [stage, url] : glados::parse_endpoint_list(e)) c.endpoints[stage] = url;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene reconstruction from two disjoint views"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "write a synthetic disjoint-view scene bundle"},
      {"bridge", "generate and select the anchor image"},
      {"reconstruct", "pointmaps, global alignment and the coarse scene"},
      {"expand", "warp-and-inpaint expansion and multiview consistency sampling"},
      {"refine", "anchored grid inpainting cycles"},
      {"evaluate", "render the trajectory and write the report"},
      {"run", "every stage in order"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : glados::kExitConfig;
  }
  const CLI::App* sub = app.get_subcommands().front();
  try {
    const auto config = resolve(sub, flags);
    return glados::run_command(sub->get_name(), config);
  } catch (const glados::Error& e) {
    std::cerr << "glados: " << e.what() << "\n";
    return glados::kExitConfig;
  }
}
