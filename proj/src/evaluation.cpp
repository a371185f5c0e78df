#include "glados/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <tbb/parallel_for.h>

#include "glados/error.hpp"
#include "glados/rasterizer.hpp"

namespace glados {

PhotometricResult photometric_error(const GaussianScene& scene, const CameraView& view,
                                    const Image& gt) {
  if (gt.width() != view.width() || gt.height() != view.height() || gt.channels() != 3) {
    throw DimensionMismatch("ground-truth image does not match its view");
  }
  const auto out = render(scene, view);
  PhotometricResult r;
  double sum = 0.0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!(out.alpha.at(x, y) >= kDepthValidAlpha)) continue;
      double e = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = out.rgb.at(x, y, c) - gt.at(x, y, c);
        e += d * d;
      }
      sum += e / 3.0;
      ++r.valid_pixels;
    }
  }
  if (r.valid_pixels == 0) {
    r.zero_valid = true;
    r.error = kZeroValidPhotoError;
  } else {
    r.error = sum / static_cast<double>(r.valid_pixels);
  }
  return r;
}

FailureVerdict detect_failure(const RunRecord& run) {
  if (run.client_error_stage) return {true, "client failure: " + *run.client_error_stage};
  if (run.coarse == CoarseFailure::kEmptyAlignment) return {true, "empty coarse alignment"};
  if (run.coarse == CoarseFailure::kDisconnectedGraph) return {true, "disconnected pair graph"};
  if (run.final_primitives < kMinScenePrimitives) return {true, "degenerate scene size"};
  if (run.mean_trajectory_alpha < kMinTrajectoryAlpha) return {true, "insufficient trajectory coverage"};
  return {};
}

nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json j = {{"scene_id", r.scene_id}, {"failed", r.failed}};
  if (r.failed) {
    j["failure_reason"] = r.failure_reason;
    return j;
  }
  if (r.photo_error) j["photo_error"] = *r.photo_error;
  if (r.photo_errors) j["photo_errors"] = *r.photo_errors;
  if (r.mean_hole_ratio) j["mean_hole_ratio"] = *r.mean_hole_ratio;
  if (r.mean_alpha) j["mean_alpha"] = *r.mean_alpha;
  j["frames"] = r.frames;
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j;
}

EvaluationReport evaluation_report_from_json(const nlohmann::json& j) {
  try {
    EvaluationReport r;
    r.scene_id = j.at("scene_id").get<std::string>();
    r.failed = j.at("failed").get<bool>();
    if (r.failed) {
      r.failure_reason = j.value("failure_reason", std::string());
      return r;
    }
    if (j.contains("photo_error")) r.photo_error = j["photo_error"].get<double>();
    if (j.contains("photo_errors")) r.photo_errors = j["photo_errors"].get<std::array<double, 2>>();
    if (j.contains("mean_hole_ratio")) r.mean_hole_ratio = j["mean_hole_ratio"].get<double>();
    if (j.contains("mean_alpha")) r.mean_alpha = j["mean_alpha"].get<double>();
    r.frames = j.value("frames", std::vector<std::string>{});
    if (j.contains("extra")) r.extra = j["extra"];
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(std::string("evaluation report: ") + e.what());
  }
}

EvaluationReport evaluate_scene(const std::string& scene_id, const GaussianScene& scene,
                                std::span<const Target> gt_pair, int n_trajectory,
                                const std::optional<std::filesystem::path>& frames_dir) {
  if (gt_pair.size() != 2) throw InvalidArgument("evaluation needs the two ground-truth views");
  if (n_trajectory < 1) throw InvalidArgument("n_trajectory must be >= 1");
  if (scene.empty()) throw InvalidArgument("cannot evaluate an empty scene");
  EvaluationReport report;
  report.scene_id = scene_id;
  std::array<double, 2> photo{};
  for (int k = 0; k < 2; ++k) {
    photo[k] = photometric_error(scene, gt_pair[k].view, gt_pair[k].image).error;
  }
  report.photo_errors = photo;
  report.photo_error = 0.5 * (photo[0] + photo[1]);

  const auto trajectory = evaluation_trajectory(gt_pair[0].view, gt_pair[1].view, n_trajectory);
  std::vector<double> holes(trajectory.size()), alphas(trajectory.size());
  std::vector<std::string> names(trajectory.size());
  // Frames are independent renders of a read-only scene.
  tbb::parallel_for(std::size_t{0}, trajectory.size(), [&](std::size_t i) {
    const auto out = render(scene, trajectory[i]);
    std::size_t hole = 0;
    double alpha = 0.0;
    for (double a : out.alpha.data()) {
      hole += a < kEvalHoleAlpha ? 1 : 0;
      alpha += a;
    }
    holes[i] = static_cast<double>(hole) / out.alpha.pixel_count();
    alphas[i] = alpha / out.alpha.pixel_count();
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.png", i + 1);
    names[i] = name;
    if (frames_dir) write_png_rgb8(*frames_dir / name, out.rgb);
  });
  double hole_sum = 0.0, alpha_sum = 0.0;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    hole_sum += holes[i];
    alpha_sum += alphas[i];
  }
  report.mean_hole_ratio = hole_sum / static_cast<double>(trajectory.size());
  report.mean_alpha = alpha_sum / static_cast<double>(trajectory.size());
  const std::string prefix = frames_dir ? frames_dir->filename().string() + "/" : "frames/";
  for (const auto& n : names) report.frames.push_back(prefix + n);
  return report;
}

EvaluationReport failed_report(const std::string& scene_id, const std::string& reason) {
  EvaluationReport r;
  r.scene_id = scene_id;
  r.failed = true;
  r.failure_reason = reason;
  return r;
}

AggregateSummary aggregate(std::span<const EvaluationReport> reports) {
  AggregateSummary s;
  s.scenes = reports.size();
  s.reports.assign(reports.begin(), reports.end());
  double photo = 0.0, hole = 0.0;
  std::size_t ok = 0;
  for (const auto& r : reports) {
    if (r.failed) {
      ++s.failed;
      continue;
    }
    photo += r.photo_error.value_or(0.0);
    hole += r.mean_hole_ratio.value_or(0.0);
    ++ok;
  }
  if (ok > 0) {
    s.mean_photo_error = photo / static_cast<double>(ok);
    s.mean_hole_ratio = hole / static_cast<double>(ok);
  }
  return s;
}

namespace {

std::string number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", *v);
  return buf;
}

}  // namespace

std::string to_csv(const AggregateSummary& s) {
  std::ostringstream out;
  out << "scene_id,failed,photo_error,mean_hole_ratio\n";
  if (s.scenes == 0) return out.str();
  for (const auto& r : s.reports) {
    out << r.scene_id << "," << (r.failed ? 1 : 0) << "," << number(r.photo_error) << ","
        << number(r.mean_hole_ratio) << "\n";
  }
  out << "mean," << s.failed << "," << number(s.mean_photo_error) << ","
      << number(s.mean_hole_ratio) << "\n";
  return out.str();
}

std::string to_table(const AggregateSummary& s) {
  std::vector<std::array<std::string, 4>> rows;
  rows.push_back({"scene", "failed", "photo", "hole_ratio"});
  for (const auto& r : s.reports) {
    rows.push_back({r.scene_id, r.failed ? "yes" : "no", number(r.photo_error),
                    number(r.mean_hole_ratio)});
  }
  if (s.scenes > 0) {
    rows.push_back({"mean", std::to_string(s.failed), number(s.mean_photo_error),
                    number(s.mean_hole_ratio)});
  }
  std::array<std::size_t, 4> width{};
  for (const auto& row : rows) {
    for (int c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    std::string line;
    for (int c = 0; c < 4; ++c) {
      line += row[c];
      if (c < 3) line += std::string(width[c] - row[c].size() + 2, ' ');
    }
    line.erase(line.find_last_not_of(' ') + 1);
    out << line << "\n";
  }
  return out.str();
}

}  // namespace glados
