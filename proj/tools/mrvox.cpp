// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// mrvox command line: voxelize, train, eval, report-memory, render-slices.
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mrvox/grid_io.hpp"
#include "mrvox/memory_report.hpp"
#include "mrvox/pipeline.hpp"
#include "mrvox/render.hpp"

namespace fs = std::filesystem;
using namespace mrvox;

namespace {

bool looks_like_dataset(const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && (fs::is_directory(entry.path() / "train") || fs::is_directory(entry.path() / "test"))) {
      return true;
    }
  }
  return false;
}

int run_voxelize(const fs::path& input, const VoxelizeJob& job) {
  if (fs::is_regular_file(input)) {
    for (const auto& p : voxelize_file(input, job.out_dir / input.stem(), job)) fmt::print("{}\n", p.string());
    return 0;
  }
  if (!fs::is_directory(input)) throw Error(fmt::format("{} does not exist", input.string()));
  if (looks_like_dataset(input)) {
    const auto manifest = scan_dataset(input, {});
    const auto summary = voxelize_dataset(manifest, job);
    fmt::print("{} files written, {} meshes failed, {} files rejected\n", summary.written.size(),
               summary.failed.size(), manifest.rejected.size());
    return 0;
  }
  std::vector<fs::path> meshes;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_regular_file() && is_mesh_extension(entry.path())) meshes.push_back(entry.path());
  }
  std::sort(meshes.begin(), meshes.end());
  std::size_t failed = 0;
  for (const auto& m : meshes) {
    try {
      voxelize_file(m, job.out_dir / m.stem(), job);
    } catch (const std::exception& e) {
      spdlog::warn("voxelization of {} failed: {}", m.string(), e.what());
      ++failed;
    }
  }
  fmt::print("{} meshes voxelized, {} failed\n", meshes.size() - failed, failed);
  return failed == meshes.size() && !meshes.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-resolution voxelization and MRCNN training"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  auto* vox = app.add_subcommand("voxelize", "Voxelize a mesh, a directory of meshes or a dataset tree");
  fs::path vox_input;
  VoxelizeJob job;
  vox->add_option("--input", vox_input, "Mesh file or directory")->required();
  vox->add_option("--coarse", job.coarse, "Coarse resolution per axis")->required()->check(CLI::PositiveNumber);
  vox->add_option("--fine", job.fine, "Fine factor per axis")->required()->check(CLI::PositiveNumber);
  vox->add_flag("--dense", job.dense, "Also write the dense grid at the effective resolution");
  vox->add_flag("--inside-fill", job.inside_fill, "Classify interior cells by ray parity");
  vox->add_option("--out", job.out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train one configuration");
  fs::path train_config;
  train->add_option("--config", train_config, "key = value config file")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  fs::path eval_ckpt, eval_data;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Voxel directory")->required()->check(CLI::ExistingDirectory);

  auto* mem = app.add_subcommand("report-memory", "Analytic parameter/activation/cell counts");
  std::vector<fs::path> mem_configs;
  mem->add_option("--config", mem_configs, "Config files")->required()->check(CLI::ExistingFile);

  auto* render = app.add_subcommand("render-slices", "Write PGM slices of a grid");
  fs::path render_input, render_out;
  std::string render_axis = "z";
  render->add_option("--input", render_input, "MRVX or DVOX file")->required()->check(CLI::ExistingFile);
  render->add_option("--axis", render_axis, "x, y or z")->check(CLI::IsMember({"x", "y", "z"}));
  render->add_option("--out", render_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*vox) return run_voxelize(vox_input, job);
    if (*train) {
      const auto run = run_experiment(load_config(train_config));
      if (!run.history.empty()) {
        const auto& last = run.history.back();
        fmt::print("epochs {} val_accuracy {:.4f} val_loss {:.4f}\n", last.epoch, last.val_accuracy, last.val_loss);
      }
      fmt::print("metrics {}\ncheckpoint {}\n", run.metrics_csv.string(), run.checkpoint.string());
      return 0;
    }
    if (*eval) {
      const auto r = evaluate_checkpoint(eval_ckpt, eval_data);
      fmt::print("samples {} loss {:.6f} accuracy {:.4f}\n", r.samples, r.loss, r.accuracy);
      return 0;
    }
    if (*mem) {
      std::vector<ExperimentConfig> configs;
      for (const auto& p : mem_configs) configs.push_back(load_config(p));
      fmt::print("{}", format_memory_report(memory_report(configs)));
      return 0;
    }
    if (*render) {
      const auto files = render_slices(read_dense_view(render_input), parse_axis(render_axis[0]), render_out);
      fmt::print("{} slices written to {}\n", files.size(), render_out.string());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
