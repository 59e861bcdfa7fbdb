// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
//
// voxset — dataset generation, sequence normalization, grid fitting and
// DDIM sampling from the command line. Every run with a fixed --seed is
// byte-reproducible and writes a run manifest echoing the resolved
// configuration.
//
// Exit codes: 0 success, 2 precondition or parse failure, 3 numerical
// divergence, 4 sequence rejected by the filters.

#include <CLI11.hpp>
#include <json.hpp>

#include <voxset/diffusion.hpp>
#include <voxset/fit.hpp>
#include <voxset/io.hpp>
#include <voxset/minens.hpp>
#include <voxset/normalize.hpp>
#include <voxset/png.hpp>
#include <voxset/renderer.hpp>
#include <voxset/rng.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using voxset::CameraPose;
using voxset::Image;
using voxset::Rng;
using voxset::Vec3;
using voxset::Viewset;
using voxset::VoxelGrid;
namespace minens = voxset::minens;

namespace {

constexpr int kExitPrecondition = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitRejected = 4;

std::string example_dir_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "ex%05d", index);
  return buf;
}

void write_view(const fs::path& stem, const Image<double>& img) {
  voxset::write_f32img((stem.string() + ".f32img"), img);
  voxset::write_png((stem.string() + ".png"), img);
}

json vec3_json(const Vec3<double>& v) {
  return json::array({v.x(), v.y(), v.z()});
}

Vec3<double> vec3_from(const json& j) {
  return Vec3<double>(j.at(0).get<double>(), j.at(1).get<double>(),
                      j.at(2).get<double>());
}

void dump_json(const fs::path& path, const json& j) {
  voxset::detail::write_file(path.string(), j.dump(2) + "\n");
}

json load_json(const fs::path& path) {
  return json::parse(voxset::detail::read_file(path.string()));
}

// ---- generate ---------------------------------------------------------------

json articulation_json(const minens::Articulation<double>& art) {
  json j;
  j["arm_pitch"] = {art.arm_pitch[0], art.arm_pitch[1]};
  j["arm_roll"] = {art.arm_roll[0], art.arm_roll[1]};
  j["leg_pitch"] = {art.leg_pitch[0], art.leg_pitch[1]};
  j["leg_roll"] = {art.leg_roll[0], art.leg_roll[1]};
  j["head_pitch"] = art.head_pitch;
  j["head_roll"] = art.head_roll;
  j["head_yaw"] = art.head_yaw;
  return j;
}

minens::Articulation<double> articulation_from(const json& j) {
  minens::Articulation<double> art;
  for (int k = 0; k < 2; ++k) {
    art.arm_pitch[size_t(k)] = j.at("arm_pitch").at(size_t(k)).get<double>();
    art.arm_roll[size_t(k)] = j.at("arm_roll").at(size_t(k)).get<double>();
    art.leg_pitch[size_t(k)] = j.at("leg_pitch").at(size_t(k)).get<double>();
    art.leg_roll[size_t(k)] = j.at("leg_roll").at(size_t(k)).get<double>();
  }
  art.head_pitch = j.at("head_pitch").get<double>();
  art.head_roll = j.at("head_roll").get<double>();
  art.head_yaw = j.at("head_yaw").get<double>();
  return art;
}

int cmd_generate(const std::string& out_dir, int count, uint64_t seed,
                 int resolution) {
  fs::create_directories(out_dir);
  json manifest;
  manifest["command"] = "generate";
  manifest["seed"] = seed;
  manifest["count"] = count;
  manifest["resolution"] = resolution;
  manifest["train_views"] = minens::kTrainViews;
  manifest["val_views"] = 1;
  manifest["examples"] = json::array();

  for (int i = 0; i < count; ++i) {
    Rng rng = minens::example_rng(seed, uint64_t(i));
    const auto ex = minens::render_example<double>(rng, resolution);
    const fs::path dir = fs::path(out_dir) / example_dir_name(i);
    fs::create_directories(dir);

    std::vector<CameraPose<double>> cameras = ex.train_poses;
    cameras.push_back(ex.val_pose);
    voxset::write_camera_manifest((dir / "cameras.txt").string(), cameras);

    for (size_t v = 0; v < ex.train_images.size(); ++v) {
      write_view(dir / ("view" + std::to_string(v)), ex.train_images[v]);
    }
    write_view(dir / "val", ex.val_image);

    json meta;
    meta["index"] = i;
    meta["seed"] = seed;
    meta["resolution"] = resolution;
    meta["background"] = vec3_json(ex.background);
    meta["skin"] = json::array();
    for (const auto& color : ex.skin) meta["skin"].push_back(vec3_json(color));
    meta["articulation"] = articulation_json(ex.articulation);
    dump_json(dir / "metadata.json", meta);

    manifest["examples"].push_back(example_dir_name(i));
  }
  dump_json(fs::path(out_dir) / "manifest.json", manifest);
  std::printf("wrote %d example(s) under %s\n", count, out_dir.c_str());
  return 0;
}

// ---- shared example loading -------------------------------------------------

struct LoadedExample {
  std::vector<Image<double>> train_images;  // RGBA
  std::vector<CameraPose<double>> train_poses;
  Image<double> val_image;  // RGBA
  CameraPose<double> val_pose;
  Vec3<double> background;
  minens::Articulation<double> articulation;
  minens::Skin<double> skin;
  int resolution = 0;
};

LoadedExample load_example(const std::string& dir) {
  const fs::path root(dir);
  const json meta = load_json(root / "metadata.json");
  LoadedExample ex;
  ex.background = vec3_from(meta.at("background"));
  ex.articulation = articulation_from(meta.at("articulation"));
  const auto& skin = meta.at("skin");
  for (int part = 0; part < minens::kPartCount; ++part) {
    ex.skin[size_t(part)] = vec3_from(skin.at(size_t(part)));
  }
  ex.resolution = meta.at("resolution").get<int>();

  const auto cameras =
      voxset::read_camera_manifest<double>((root / "cameras.txt").string());
  voxset::require(cameras.size() == size_t(minens::kTrainViews) + 1,
                  "example must carry 3 train cameras and 1 val camera");
  for (int v = 0; v < minens::kTrainViews; ++v) {
    ex.train_poses.push_back(cameras[size_t(v)]);
    ex.train_images.push_back(voxset::read_f32img<double>(
        (root / ("view" + std::to_string(v) + ".f32img")).string()));
  }
  ex.val_pose = cameras.back();
  ex.val_image = voxset::read_f32img<double>((root / "val.f32img").string());
  return ex;
}

Image<double> rgb_of(const Image<double>& rgba) {
  Image<double> rgb(rgba.height, rgba.width, 3);
  rgb.values = rgba.values.leftCols(3);
  return rgb;
}

// ---- normalize ---------------------------------------------------------------

int cmd_normalize(const std::string& cameras_path,
                  const std::string& points_path, const std::string& out_dir,
                  double box_size) {
  voxset::Sequence<double> seq;
  seq.cameras = voxset::read_camera_manifest<double>(cameras_path);
  seq.points = voxset::read_point_cloud<double>(points_path);

  auto [normalized, report] = voxset::normalize_sequence(seq, box_size);

  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  voxset::write_camera_manifest((root / "cameras.txt").string(),
                                normalized.cameras);
  voxset::write_point_cloud((root / "points.txt").string(),
                            normalized.points);
  const std::string report_text = voxset::format_report(report);
  voxset::detail::write_file((root / "report.txt").string(), report_text);

  json run;
  run["command"] = "normalize";
  run["cameras"] = cameras_path;
  run["points"] = points_path;
  run["box_size"] = box_size;
  run["accepted"] = report.accepted;
  run["reason"] = report.reason.empty() ? "none" : report.reason;
  dump_json(root / "run.json", run);

  std::fputs(report_text.c_str(), stdout);
  return report.accepted ? 0 : kExitRejected;
}

// ---- fit ----------------------------------------------------------------------

int cmd_fit(const std::string& example_dir, const std::string& out_dir,
            int iterations, double lambda, double step_size, int grid_side,
            int threads, uint64_t seed) {
  const LoadedExample ex = load_example(example_dir);

  Viewset<double> targets;
  for (int v = 0; v < minens::kTrainViews; ++v) {
    targets.images.push_back(rgb_of(ex.train_images[size_t(v)]));
    targets.poses.push_back(ex.train_poses[size_t(v)]);
    targets.noise_levels.push_back(0);
  }
  const Image<double> val_rgb = rgb_of(ex.val_image);

  voxset::FitConfig<double> cfg;
  cfg.iterations = iterations;
  cfg.step_size = step_size;
  cfg.lambda = lambda;
  cfg.grid_side = grid_side;
  cfg.threads = threads;
  cfg.render.background_rgb = ex.background;

  std::optional<std::pair<Image<double>, CameraPose<double>>> unseen;
  if (lambda > 0.0) unseen = std::make_pair(val_rgb, ex.val_pose);

  const auto result = voxset::fit_grid(targets, unseen, cfg);

  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  voxset::write_vxg((root / "grid.vxg").string(), result.grid);

  std::string loss_text;
  for (size_t i = 0; i < result.loss_history.size(); ++i) {
    loss_text += std::to_string(i) + " " +
                 voxset::detail::format_double(result.loss_history[i]) + "\n";
  }
  voxset::detail::write_file((root / "loss.txt").string(), loss_text);

  const int res = ex.resolution;
  std::string metrics = "# view psnr ssim\n";
  auto add_metrics = [&](const std::string& name,
                         const CameraPose<double>& pose,
                         const Image<double>& truth) {
    const Image<double> rendered =
        voxset::render(result.grid, pose, res, res, cfg.render, threads);
    write_view(root / ("render_" + name), rendered);
    metrics += name + " " +
               voxset::detail::format_double(voxset::psnr(rendered, truth)) +
               " " +
               voxset::detail::format_double(voxset::ssim(rendered, truth)) +
               "\n";
  };
  for (int v = 0; v < minens::kTrainViews; ++v) {
    add_metrics("view" + std::to_string(v), ex.train_poses[size_t(v)],
                targets.images[size_t(v)]);
  }
  add_metrics("val", ex.val_pose, val_rgb);
  voxset::detail::write_file((root / "metrics.txt").string(), metrics);

  json run;
  run["command"] = "fit";
  run["example"] = example_dir;
  run["seed"] = seed;
  run["iterations"] = iterations;
  run["lambda"] = lambda;
  run["step_size"] = step_size;
  run["grid_side"] = grid_side;
  run["threads"] = threads;
  dump_json(root / "run.json", run);

  std::fputs(metrics.c_str(), stdout);
  return 0;
}

// ---- sample --------------------------------------------------------------------

int cmd_sample(const std::string& grid_path, const std::string& example_dir,
               const std::string& out_dir, int steps, int clean_views,
               const std::string& denoiser_kind, int fit_iterations,
               int grid_side, int resolution, uint64_t seed, int threads) {
  voxset::require(!grid_path.empty() || !example_dir.empty(),
                  "sample: need --grid or --example as the target");

  VoxelGrid<double> target;
  Vec3<double> background(1, 1, 1);
  std::vector<CameraPose<double>> poses;
  Rng rng = Rng(seed).stream("sample");

  if (!example_dir.empty()) {
    const LoadedExample ex = load_example(example_dir);
    const auto cuboids = minens::build_character(ex.articulation, ex.skin);
    target = minens::rasterize_character(cuboids, grid_side);
    background = ex.background;
    poses = ex.train_poses;
    poses.push_back(ex.val_pose);
    resolution = ex.resolution;
  } else {
    target = voxset::read_vxg<double>(grid_path);
    for (int v = 0; v < 4; ++v) {
      poses.push_back(minens::sample_camera<double>(rng));
    }
  }
  voxset::require(clean_views >= 0 && clean_views < int(poses.size()),
                  "sample: --clean must leave at least one view to generate");

  voxset::RenderConfig<double> render_cfg;
  render_cfg.background_rgb = background;

  Viewset<double> conditioning;
  for (int v = 0; v < clean_views; ++v) {
    conditioning.images.push_back(voxset::render(
        target, poses[size_t(v)], resolution, resolution, render_cfg,
        threads));
    conditioning.poses.push_back(poses[size_t(v)]);
    conditioning.noise_levels.push_back(0);
  }
  const std::vector<CameraPose<double>> generate(
      poses.begin() + clean_views, poses.end());

  const auto sched = voxset::cosine_schedule<double>(1000);
  voxset::Denoiser<double> denoiser;
  if (denoiser_kind == "oracle") {
    denoiser = [&](const Viewset<double>&, const std::vector<int>&) {
      return target;
    };
  } else {
    // Ground-truth-free mode: each step fits a grid to the current viewset
    // with Min-SNR weights at the views' noise levels.
    voxset::FitConfig<double> fit_cfg;
    fit_cfg.iterations = fit_iterations;
    fit_cfg.grid_side = grid_side;
    fit_cfg.threads = threads;
    fit_cfg.render = render_cfg;
    fit_cfg.weight_mode = voxset::FitConfig<double>::WeightMode::min_snr;
    fit_cfg.schedule = sched;
    denoiser = [fit_cfg](const Viewset<double>& vs,
                         const std::vector<int>&) {
      return voxset::fit_grid(vs, std::nullopt, fit_cfg).grid;
    };
  }

  Rng loop_rng = rng.stream("ddim");
  const auto result =
      voxset::sample_loop(denoiser, sched, steps, conditioning, generate,
                          resolution, resolution, render_cfg, loop_rng,
                          threads);

  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  voxset::write_vxg((root / "grid.vxg").string(), result.grid);

  std::string metrics = "# view role psnr_vs_target\n";
  for (int v = 0; v < result.viewset.size(); ++v) {
    const std::string name = "view" + std::to_string(v);
    write_view(root / name, result.viewset.images[size_t(v)]);
    const Image<double> expected =
        voxset::render(target, result.viewset.poses[size_t(v)], resolution,
                       resolution, render_cfg, threads);
    metrics += name + (v < clean_views ? " clean " : " generated ") +
               voxset::detail::format_double(
                   voxset::psnr(result.viewset.images[size_t(v)], expected)) +
               "\n";
  }
  voxset::write_camera_manifest((root / "cameras.txt").string(),
                                result.viewset.poses);
  voxset::detail::write_file((root / "metrics.txt").string(), metrics);

  json run;
  run["command"] = "sample";
  run["grid"] = grid_path.empty() ? json() : json(grid_path);
  run["example"] = example_dir.empty() ? json() : json(example_dir);
  run["seed"] = seed;
  run["steps"] = steps;
  run["clean_views"] = clean_views;
  run["denoiser"] = denoiser_kind;
  run["fit_iterations"] = fit_iterations;
  run["grid_side"] = grid_side;
  run["resolution"] = resolution;
  run["threads"] = threads;
  dump_json(root / "run.json", run);

  std::fputs(metrics.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxset: voxel radiance fields, viewset diffusion and the "
               "Minens dataset"};
  app.require_subcommand(1);
  app.set_config("--config");

  uint64_t seed = 0;
  int threads = 1;
  app.add_option("--seed", seed, "master seed; all randomness derives from it")
      ->capture_default_str();
  app.add_option("--threads", threads, "worker threads (deterministic per value)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* gen = app.add_subcommand("generate", "render a Minens dataset");
  std::string gen_out;
  int gen_count = 10;
  int gen_resolution = minens::kDefaultResolution;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of examples")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen->add_option("--resolution", gen_resolution, "view resolution")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* norm = app.add_subcommand("normalize",
                                  "normalize a camera sequence + point cloud");
  std::string norm_cameras, norm_points, norm_out;
  double norm_box = 1.2;
  norm->add_option("--cameras", norm_cameras, "camera manifest")->required();
  norm->add_option("--points", norm_points, "point cloud file")->required();
  norm->add_option("--out", norm_out, "output directory")->required();
  norm->add_option("--box-size", norm_box,
                   "target cube side the cloud is scaled into")
      ->capture_default_str();

  auto* fit = app.add_subcommand("fit", "fit a voxel grid to one example");
  std::string fit_example, fit_out;
  int fit_iterations = 2000;
  int fit_grid_side = 32;
  double fit_lambda = 0.1;
  double fit_step = 0.05;
  fit->add_option("--example", fit_example, "example directory")->required();
  fit->add_option("--out", fit_out, "output directory")->required();
  fit->add_option("--iterations", fit_iterations, "optimizer iterations")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  fit->add_option("--lambda", fit_lambda,
                  "unseen-view weight factor (0 disables the val-view term)")
      ->capture_default_str();
  fit->add_option("--step-size", fit_step, "optimizer step size")
      ->capture_default_str();
  fit->add_option("--grid-side", fit_grid_side, "voxel grid resolution")
      ->capture_default_str();

  auto* sample = app.add_subcommand("sample", "DDIM-sample a viewset");
  std::string sample_grid, sample_example, sample_out;
  int sample_steps = 250;
  int sample_clean = 1;
  int sample_fit_iterations = 150;
  int sample_grid_side = 32;
  int sample_resolution = minens::kDefaultResolution;
  std::string sample_denoiser = "oracle";
  sample->add_option("--grid", sample_grid, "target grid (.vxg)");
  sample->add_option("--example", sample_example,
                     "example directory (target grid rasterized from it)");
  sample->add_option("--out", sample_out, "output directory")->required();
  sample->add_option("--steps", sample_steps, "DDIM inference steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sample->add_option("--clean", sample_clean,
                     "number of clean conditioning views")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sample->add_option("--denoiser", sample_denoiser,
                     "oracle (target grid) or fit (per-step grid fitting)")
      ->check(CLI::IsMember({"oracle", "fit"}))
      ->capture_default_str();
  sample->add_option("--fit-iterations", sample_fit_iterations,
                     "per-step iterations for the fit denoiser")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sample->add_option("--grid-side", sample_grid_side, "voxel grid resolution")
      ->capture_default_str();
  sample->add_option("--resolution", sample_resolution,
                     "view resolution (grid mode only)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitPrecondition;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(gen_out, gen_count, seed, gen_resolution);
    }
    if (norm->parsed()) {
      return cmd_normalize(norm_cameras, norm_points, norm_out, norm_box);
    }
    if (fit->parsed()) {
      return cmd_fit(fit_example, fit_out, fit_iterations, fit_lambda,
                     fit_step, fit_grid_side, threads, seed);
    }
    if (sample->parsed()) {
      return cmd_sample(sample_grid, sample_example, sample_out, sample_steps,
                        sample_clean, sample_denoiser, sample_fit_iterations,
                        sample_grid_side, sample_resolution, seed, threads);
    }
  } catch (const voxset::DivergenceError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitDivergence;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitPrecondition;
  }
  return 0;
}
