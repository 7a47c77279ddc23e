// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end harness: dataset scan, batch voxelization, training and
// evaluation of the coarse-only, dense and multi-resolution configurations.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrvox/mrcnn.hpp"

namespace mrvox {

enum class TrainMode { CoarseOnly, Dense, MultiRes };
enum class Precision { Float32, Float64 };

std::string_view mode_name(TrainMode mode);
/// "coarse-only", "dense" or "multires"; throws ConfigError otherwise.
TrainMode parse_mode(std::string_view text);

struct ExperimentConfig {
  std::filesystem::path dataset_root;
  /// Voxelized data; defaults to <output_dir>/voxels.
  std::filesystem::path voxel_dir;
  std::filesystem::path output_dir = "run";
  /// Empty means every class directory under dataset_root, sorted.
  std::vector<std::string> classes;
  /// 0 keeps every file.
  std::size_t max_train_per_class = 0;
  std::size_t max_test_per_class = 0;
  int coarse = 8;
  int fine = 4;
  TrainMode mode = TrainMode::MultiRes;
  int epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.01;
  std::uint64_t seed = 1;
  bool inside_fill = false;
  /// Scalar type used for training ("float" or "double").
  Precision precision = Precision::Float32;
  /// Coarse stack without the class head; dense:K is appended.
  std::string coarse_net = kDefaultCoarseLayers;
  std::string fine_net = kDefaultFineLayers;
  /// Voxelization aborts when more than this fraction of meshes fail.
  double max_failure_fraction = 0.1;

  /// Dense-mode input resolution, coarse * fine.
  int effective_resolution() const { return coarse * fine; }
  std::filesystem::path resolved_voxel_dir() const {
    return voxel_dir.empty() ? output_dir / "voxels" : voxel_dir;
  }
};

/// Flat `key = value` lines, '#' comments. Relative paths are resolved
/// against `base_dir`. Throws ConfigError (with line) on unknown keys or bad
/// values.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string format_config(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Dataset.

enum class Split { Train, Test };
std::string_view split_name(Split split);

struct ManifestEntry {
  std::filesystem::path path;
  std::string class_name;
  std::size_t label = 0;
  Split split = Split::Train;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<std::string> classes;
  /// Sorted by (class order, split, file name).
  std::vector<ManifestEntry> entries;
  /// Files skipped during the scan with the reason.
  std::vector<std::pair<std::filesystem::path, std::string>> rejected;

  std::size_t count(Split split) const;
};

bool is_mesh_extension(const std::filesystem::path& path);

/// Reads root/<class>/{train,test}/*.off|*.stl. An empty `classes` list means
/// every subdirectory of root. Throws DatasetError for a missing or empty
/// class. Per-class limits keep the first files in sorted order (0 = all).
Manifest scan_dataset(const std::filesystem::path& root, const std::vector<std::string>& classes,
                      std::size_t max_train_per_class = 0, std::size_t max_test_per_class = 0);

struct VoxelizeJob {
  std::filesystem::path out_dir;
  int coarse = 8;
  int fine = 4;
  bool dense = false;
  bool inside_fill = false;
  double max_failure_fraction = 0.1;
};

struct VoxelizeSummary {
  std::vector<std::filesystem::path> written;
  std::vector<std::pair<std::filesystem::path, std::string>> failed;
};

/// Output path for one mesh: <out>/<split>/<class>/<stem><ext>.
std::filesystem::path voxel_path(const std::filesystem::path& out_dir, const ManifestEntry& entry,
                                 std::string_view extension);

/// Voxelizes one mesh in its own padded box: writes <stem>.mrvx and, with
/// `dense`, <stem>.dvox at the effective resolution next to it.
std::vector<std::filesystem::path> voxelize_file(const std::filesystem::path& mesh_path,
                                                 const std::filesystem::path& out_stem, const VoxelizeJob& job);

/// Voxelizes every manifest entry. Failures are logged and skipped; throws
/// DatasetError when the failed fraction exceeds job.max_failure_fraction.
VoxelizeSummary voxelize_dataset(const Manifest& manifest, const VoxelizeJob& job);

// ---------------------------------------------------------------------------
// Training.

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainRun {
  ExperimentConfig config;
  std::vector<EpochRecord> history;
  std::filesystem::path metrics_csv;
  std::filesystem::path checkpoint;
};

inline constexpr std::string_view kMetricsHeader = "epoch,train_loss,val_loss,val_accuracy,seconds";
std::string format_metrics_row(const EpochRecord& record);

/// One labelled sample of voxelized data.
struct VoxelSample {
  std::filesystem::path path;
  std::size_t label = 0;
};

/// Voxel files of one split under <voxel_dir>/<split>/<class>/, sorted, with
/// the per-class limit applied.
std::vector<VoxelSample> list_voxel_samples(const std::filesystem::path& voxel_dir,
                                            const std::vector<std::string>& classes, Split split,
                                            std::string_view extension, std::size_t max_per_class);

/// Class list of a config, resolved from dataset_root or the voxel dir when
/// the config leaves it empty.
std::vector<std::string> resolve_classes(const ExperimentConfig& config);

/// Trains the mode's model, evaluating on the test split after every epoch.
/// metrics.csv and model.ckpt in output_dir are rewritten after each epoch.
/// Missing voxel data is produced from dataset_root first.
TrainRun run_experiment(const ExperimentConfig& config);

struct EvalResult {
  std::size_t samples = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Evaluates a checkpoint written by run_experiment on <data>/test (or
/// <data> itself when it has no test directory).
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir);

}  // namespace mrvox
