// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mrvox/grid_io.hpp"
#include "mrvox/parallel.hpp"

namespace fs = std::filesystem;

namespace mrvox {

std::string_view mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::CoarseOnly:
      return "coarse-only";
    case TrainMode::Dense:
      return "dense";
    case TrainMode::MultiRes:
      return "multires";
  }
  return "?";
}

TrainMode parse_mode(std::string_view text) {
  if (text == "coarse-only" || text == "coarse") return TrainMode::CoarseOnly;
  if (text == "dense") return TrainMode::Dense;
  if (text == "multires" || text == "multi-res") return TrainMode::MultiRes;
  throw ConfigError(fmt::format("unknown mode '{}', expected coarse-only, dense or multires", text));
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

template <class T>
T parse_number(std::string_view key, std::string_view value, std::size_t line) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(fmt::format("config key '{}': '{}' is not a valid number", key, value), line);
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value, std::size_t line) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ParseError(fmt::format("config key '{}': '{}' is not a boolean", key, value), line);
}

fs::path resolve_path(std::string_view value, const fs::path& base) {
  fs::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

std::vector<fs::path> sorted_children(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: expected key = value, got '{}'", line_no, line));
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      if (key == "dataset_root") {
        cfg.dataset_root = resolve_path(value, base_dir);
      } else if (key == "voxel_dir") {
        cfg.voxel_dir = resolve_path(value, base_dir);
      } else if (key == "output_dir") {
        cfg.output_dir = resolve_path(value, base_dir);
      } else if (key == "classes") {
        cfg.classes = split_list(value);
      } else if (key == "max_train_per_class") {
        cfg.max_train_per_class = parse_number<std::size_t>(key, value, line_no);
      } else if (key == "max_test_per_class") {
        cfg.max_test_per_class = parse_number<std::size_t>(key, value, line_no);
      } else if (key == "coarse") {
        cfg.coarse = parse_number<int>(key, value, line_no);
      } else if (key == "fine") {
        cfg.fine = parse_number<int>(key, value, line_no);
      } else if (key == "mode") {
        cfg.mode = parse_mode(value);
      } else if (key == "epochs") {
        cfg.epochs = parse_number<int>(key, value, line_no);
      } else if (key == "batch_size") {
        cfg.batch_size = parse_number<std::size_t>(key, value, line_no);
      } else if (key == "lr") {
        cfg.lr = parse_number<double>(key, value, line_no);
      } else if (key == "seed") {
        cfg.seed = parse_number<std::uint64_t>(key, value, line_no);
      } else if (key == "inside_fill") {
        cfg.inside_fill = parse_bool(key, value, line_no);
      } else if (key == "precision") {
        if (value == "float" || value == "f32") {
          cfg.precision = Precision::Float32;
        } else if (value == "double" || value == "f64") {
          cfg.precision = Precision::Float64;
        } else {
          throw ParseError(fmt::format("precision must be float or double, got '{}'", value), line_no);
        }
      } else if (key == "coarse_net") {
        cfg.coarse_net = std::string(value);
      } else if (key == "fine_net") {
        cfg.fine_net = std::string(value);
      } else if (key == "max_failure_fraction") {
        cfg.max_failure_fraction = parse_number<double>(key, value, line_no);
      } else {
        throw ParseError(fmt::format("unknown config key '{}'", key), line_no);
      }
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  if (cfg.coarse < 1 || cfg.fine < 1) throw ConfigError("coarse and fine must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("lr must be a finite value >= 0");
  parse_layers(cfg.coarse_net);
  parse_layers(cfg.fine_net);
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  try {
    return parse_config(text, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string format_config(const ExperimentConfig& c) {
  std::string out;
  auto add = [&](std::string_view key, const std::string& value) { out += fmt::format("{} = {}\n", key, value); };
  if (!c.dataset_root.empty()) add("dataset_root", c.dataset_root.string());
  if (!c.voxel_dir.empty()) add("voxel_dir", c.voxel_dir.string());
  add("output_dir", c.output_dir.string());
  if (!c.classes.empty()) add("classes", join(c.classes));
  add("max_train_per_class", std::to_string(c.max_train_per_class));
  add("max_test_per_class", std::to_string(c.max_test_per_class));
  add("coarse", std::to_string(c.coarse));
  add("fine", std::to_string(c.fine));
  add("mode", std::string(mode_name(c.mode)));
  add("epochs", std::to_string(c.epochs));
  add("batch_size", std::to_string(c.batch_size));
  add("lr", fmt::format("{}", c.lr));
  add("seed", std::to_string(c.seed));
  add("inside_fill", c.inside_fill ? "true" : "false");
  add("precision", c.precision == Precision::Float64 ? "double" : "float");
  add("coarse_net", c.coarse_net);
  add("fine_net", c.fine_net);
  add("max_failure_fraction", fmt::format("{}", c.max_failure_fraction));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset.

std::string_view split_name(Split split) { return split == Split::Train ? "train" : "test"; }

std::size_t Manifest::count(Split split) const {
  return std::size_t(std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.split == split; }));
}

bool is_mesh_extension(const fs::path& path) {
  const auto ext = lower(path.extension().string());
  return ext == ".off" || ext == ".stl";
}

Manifest scan_dataset(const fs::path& root, const std::vector<std::string>& classes, std::size_t max_train_per_class,
                      std::size_t max_test_per_class) {
  if (!fs::is_directory(root)) throw DatasetError(fmt::format("dataset root '{}' is not a directory", root.string()));
  Manifest m;
  m.classes = classes;
  if (m.classes.empty()) {
    for (const auto& dir : sorted_children(root, true)) m.classes.push_back(dir.filename().string());
    if (m.classes.empty()) throw DatasetError(fmt::format("dataset root '{}' has no class directories", root.string()));
  }
  for (std::size_t label = 0; label < m.classes.size(); ++label) {
    const auto& name = m.classes[label];
    const fs::path class_dir = root / name;
    if (!fs::is_directory(class_dir)) {
      throw DatasetError(fmt::format("class directory '{}' not found under '{}'", name, root.string()));
    }
    std::size_t found = 0;
    for (Split split : {Split::Train, Split::Test}) {
      const fs::path dir = class_dir / std::string(split_name(split));
      if (!fs::is_directory(dir)) continue;
      const std::size_t limit = split == Split::Train ? max_train_per_class : max_test_per_class;
      std::size_t taken = 0;
      for (const auto& file : sorted_children(dir, false)) {
        if (!is_mesh_extension(file)) {
          spdlog::warn("skipping {}: unsupported extension", file.string());
          m.rejected.emplace_back(file, "unsupported extension");
          continue;
        }
        if (!std::ifstream(file, std::ios::binary)) {
          spdlog::warn("skipping {}: unreadable", file.string());
          m.rejected.emplace_back(file, "unreadable");
          continue;
        }
        ++found;
        if (limit != 0 && taken >= limit) continue;
        m.entries.push_back({file, name, label, split});
        ++taken;
      }
    }
    if (found == 0) throw DatasetError(fmt::format("class '{}' has no mesh files under '{}'", name, class_dir.string()));
  }
  return m;
}

fs::path voxel_path(const fs::path& out_dir, const ManifestEntry& entry, std::string_view extension) {
  return out_dir / std::string(split_name(entry.split)) / entry.class_name /
         (entry.path.stem().string() + std::string(extension));
}

std::vector<fs::path> voxelize_file(const fs::path& mesh_path, const fs::path& out_stem, const VoxelizeJob& job) {
  if (job.coarse < 1 || job.fine < 1) throw Error("coarse and fine must be >= 1");
  const TriangleMesh mesh = load_mesh(mesh_path);
  mesh.validate();
  if (mesh.triangles.empty()) throw EmptyMeshError(fmt::format("{} has no triangles", mesh_path.string()));
  const Aabb box = compute_aabb(mesh);
  const Dims dims{job.coarse, job.coarse, job.coarse};

  std::vector<fs::path> written;
  const auto mr = voxelize_multires(mesh, box, dims, job.fine, {job.inside_fill, true});
  fs::path mrvx = out_stem;
  mrvx += kMrvxExtension;
  write_file_bytes(mrvx, serialize(mr));
  written.push_back(mrvx);

  if (job.dense) {
    VoxelizeOptions opts;
    opts.inside_fill = job.inside_fill;
    opts.normals = false;
    const auto grid = voxelize(mesh, GridSpec(dims.scaled(job.fine), box), opts);
    fs::path dvox = out_stem;
    dvox += kDvoxExtension;
    write_file_bytes(dvox, serialize_dense(grid, job.inside_fill));
    written.push_back(dvox);
  }
  return written;
}

VoxelizeSummary voxelize_dataset(const Manifest& manifest, const VoxelizeJob& job) {
  const std::size_t n = manifest.entries.size();
  std::vector<std::vector<fs::path>> outputs(n);
  std::vector<std::string> errors(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      const auto& entry = manifest.entries[e];
      auto stem = voxel_path(job.out_dir, entry, "");
      try {
        outputs[e] = voxelize_file(entry.path, stem, job);
      } catch (const std::exception& ex) {
        errors[e] = ex.what();
        if (errors[e].empty()) errors[e] = "unknown error";
      }
    }
  });
  VoxelizeSummary summary;
  for (std::size_t e = 0; e < n; ++e) {
    if (!errors[e].empty()) {
      spdlog::warn("voxelization of {} failed: {}", manifest.entries[e].path.string(), errors[e]);
      summary.failed.emplace_back(manifest.entries[e].path, errors[e]);
    }
    for (auto& p : outputs[e]) summary.written.push_back(std::move(p));
  }
  if (n > 0 && double(summary.failed.size()) > job.max_failure_fraction * double(n)) {
    throw DatasetError(fmt::format("{} of {} meshes failed to voxelize (limit {:.0f}%)", summary.failed.size(), n,
                                   job.max_failure_fraction * 100.0));
  }
  spdlog::info("voxelized {} meshes ({} failed) into {}", n - summary.failed.size(), summary.failed.size(),
               job.out_dir.string());
  return summary;
}

// ---------------------------------------------------------------------------
// Training.

std::string format_metrics_row(const EpochRecord& r) {
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.3f}", r.epoch, r.train_loss, r.val_loss, r.val_accuracy,
                     r.seconds);
}

namespace {

std::vector<VoxelSample> list_class_files(const fs::path& dir, const std::vector<std::string>& classes,
                                          std::string_view extension, std::size_t max_per_class) {
  std::vector<VoxelSample> out;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    const fs::path class_dir = dir / classes[label];
    if (!fs::is_directory(class_dir)) continue;
    std::size_t taken = 0;
    for (const auto& file : sorted_children(class_dir, false)) {
      if (file.extension() != extension) continue;
      if (max_per_class != 0 && taken >= max_per_class) break;
      out.push_back({file, label});
      ++taken;
    }
  }
  return out;
}

std::string_view sample_extension(TrainMode mode) { return mode == TrainMode::Dense ? kDvoxExtension : kMrvxExtension; }

// In-memory samples for one split.
template <class T>
struct LoadedSplit {
  std::vector<BasicTensor<T>> volumes;    // coarse-only and dense
  std::vector<MultiResGrid> grids;  // multires
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

template <class T>
LoadedSplit<T> load_split(const std::vector<VoxelSample>& samples, TrainMode mode, Dims expected, int fine) {
  LoadedSplit<T> out;
  out.labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (mode == TrainMode::Dense) {
      auto grid = read_dvox(s.path);
      if (grid.dims() != expected) throw ShapeError(fmt::format("{}: grid dims do not match the config", s.path.string()));
      out.volumes.push_back(coarse_occupancy<T>(grid));
    } else {
      auto mr = read_mrvx(s.path);
      if (mr.coarse.dims() != expected || mr.fine_factor != fine) {
        throw ShapeError(fmt::format("{}: grid dims or fine factor do not match the config", s.path.string()));
      }
      if (mode == TrainMode::CoarseOnly) {
        out.volumes.push_back(coarse_occupancy<T>(mr.coarse));
      } else {
        mr.coarse.normals.clear();
        mr.fine_normals.clear();
        out.grids.push_back(std::move(mr));
      }
    }
    out.labels.push_back(s.label);
  }
  return out;
}

// Mean cross-entropy and accuracy, reduced in sample order.
template <class T>
EvalResult evaluate(const std::function<BasicTensor<T>(std::size_t)>& logits_of, const std::vector<std::size_t>& labels) {
  const std::size_t n = labels.size();
  std::vector<double> losses(n);
  std::vector<std::uint8_t> correct(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const auto logits = logits_of(s);
      losses[s] = softmax_cross_entropy(logits, labels[s]).loss;
      correct[s] = argmax(logits) == labels[s];
    }
  });
  EvalResult r;
  r.samples = n;
  if (n == 0) return r;
  double loss = 0.0;
  std::size_t hits = 0;
  for (std::size_t s = 0; s < n; ++s) {
    loss += losses[s];
    hits += correct[s];
  }
  r.loss = loss / double(n);
  r.accuracy = double(hits) / double(n);
  return r;
}

std::vector<LayerSpec> coarse_stack(const std::string& text, std::size_t num_classes) {
  auto layers = parse_layers(text);
  layers.push_back(LayerSpec::dense(int(num_classes)));
  return layers;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace

std::vector<VoxelSample> list_voxel_samples(const fs::path& voxel_dir, const std::vector<std::string>& classes,
                                            Split split, std::string_view extension, std::size_t max_per_class) {
  return list_class_files(voxel_dir / std::string(split_name(split)), classes, extension, max_per_class);
}

std::vector<std::string> resolve_classes(const ExperimentConfig& config) {
  if (!config.classes.empty()) return config.classes;
  std::vector<std::string> out;
  fs::path dir = config.dataset_root;
  if (dir.empty() || !fs::is_directory(dir)) dir = config.resolved_voxel_dir() / "train";
  if (fs::is_directory(dir)) {
    for (const auto& d : sorted_children(dir, true)) out.push_back(d.filename().string());
  }
  if (out.size() < 2) throw ConfigError("cannot resolve at least two classes from the config");
  return out;
}

namespace {

template <class T>
TrainRun train_and_evaluate(const ExperimentConfig& config, const std::vector<std::string>& classes,
                            const std::vector<VoxelSample>& train_files, const std::vector<VoxelSample>& test_files) {
  const int res = config.mode == TrainMode::Dense ? config.effective_resolution() : config.coarse;
  const Dims dims{res, res, res};
  const auto train = load_split<T>(train_files, config.mode, dims, config.fine);
  const auto test = load_split<T>(test_files, config.mode, dims, config.fine);
  spdlog::info("{}: {} train / {} test samples, {} classes", mode_name(config.mode), train.size(), test.size(),
               classes.size());

  Rng rng(config.seed);
  Network<T> net;
  MrcnnModel<T> mrcnn;
  const bool multires = config.mode == TrainMode::MultiRes;
  if (multires) {
    mrcnn = MrcnnModel<T>::create(dims, config.fine, coarse_stack(config.coarse_net, classes.size()),
                                      parse_layers(config.fine_net), rng);
  } else {
    net = Network<T>(volume_shape(dims), coarse_stack(config.coarse_net, classes.size()));
    net.init(rng);
  }

  TrainRun run;
  run.config = config;
  run.metrics_csv = config.output_dir / "metrics.csv";
  run.checkpoint = config.output_dir / "model.ckpt";
  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "config.txt", format_config(config));

  std::map<std::string, std::string> meta{{"mode", std::string(mode_name(config.mode))},
                                          {"classes", join(classes)},
                                          {"coarse", std::to_string(config.coarse)},
                                          {"fine", std::to_string(config.fine)},
                                          {"coarse_net", config.coarse_net},
                                          {"fine_net", config.fine_net},
                                          {"inside_fill", config.inside_fill ? "true" : "false"}};
  std::string csv = std::string(kMetricsHeader) + "\n";
  auto persist = [&](int epochs_done) {
    meta["epochs_completed"] = std::to_string(epochs_done);
    std::vector<const Network<T>*> nets;
    if (multires) {
      nets = {&mrcnn.coarse, &mrcnn.fine};
    } else {
      nets = {&net};
    }
    write_file_bytes(run.checkpoint, encode_checkpoint<T>(config.seed, meta, nets));
    write_text(run.metrics_csv, csv);
  };
  persist(0);

  auto logits_of = [&](const LoadedSplit<T>& split) -> std::function<BasicTensor<T>(std::size_t)> {
    if (multires) return [&](std::size_t s) { return embed_forward<T>(mrcnn, split.grids[s], nullptr); };
    return [&](std::size_t s) { return net.forward(split.volumes[s]); };
  };

  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::size_t count = stop - start;
      double loss = 0.0;
      if (multires) {
        std::vector<MrcnnSample> batch;
        for (std::size_t i = start; i < stop; ++i) batch.emplace_back(&train.grids[order[i]], train.labels[order[i]]);
        loss = train_step<T>(mrcnn, batch, config.lr);
      } else {
        std::vector<const BasicTensor<T>*> inputs;
        std::vector<std::size_t> labels;
        for (std::size_t i = start; i < stop; ++i) {
          inputs.push_back(&train.volumes[order[i]]);
          labels.push_back(train.labels[order[i]]);
        }
        loss = train_step<T>(net, inputs, labels, config.lr);
      }
      loss_sum += loss * double(count);
    }
    const auto val = evaluate<T>(logits_of(test), test.labels);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(train.size());
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.history.push_back(rec);
    csv += format_metrics_row(rec) + "\n";
    persist(epoch);
    spdlog::info("{} epoch {}/{}: train_loss {:.4f} val_loss {:.4f} val_acc {:.3f} ({:.1f}s)",
                 mode_name(config.mode), epoch, config.epochs, rec.train_loss, rec.val_loss, rec.val_accuracy,
                 rec.seconds);
  }
  return run;
}


}  // namespace

TrainRun run_experiment(const ExperimentConfig& config) {
  const auto classes = resolve_classes(config);
  const auto ext = sample_extension(config.mode);
  const fs::path vdir = config.resolved_voxel_dir();

  auto train_files = list_voxel_samples(vdir, classes, Split::Train, ext, config.max_train_per_class);
  auto test_files = list_voxel_samples(vdir, classes, Split::Test, ext, config.max_test_per_class);
  if ((train_files.empty() || test_files.empty()) && !config.dataset_root.empty()) {
    const auto manifest =
        scan_dataset(config.dataset_root, classes, config.max_train_per_class, config.max_test_per_class);
    VoxelizeJob job{vdir, config.coarse, config.fine, config.mode == TrainMode::Dense, config.inside_fill,
                    config.max_failure_fraction};
    voxelize_dataset(manifest, job);
    train_files = list_voxel_samples(vdir, classes, Split::Train, ext, config.max_train_per_class);
    test_files = list_voxel_samples(vdir, classes, Split::Test, ext, config.max_test_per_class);
  }
  if (train_files.empty()) throw DatasetError(fmt::format("no training samples under {}", vdir.string()));

  if (config.precision == Precision::Float64) {
    return train_and_evaluate<double>(config, classes, train_files, test_files);
  }
  return train_and_evaluate<float>(config, classes, train_files, test_files);
}

namespace {

template <class T>
EvalResult evaluate_networks(const Checkpoint& ck, TrainMode mode, const std::vector<VoxelSample>& files, int res,
                             int fine) {
  const auto split = load_split<T>(files, mode, {res, res, res}, fine);
  if (mode == TrainMode::MultiRes) {
    const MrcnnModel<T> model(ck.networks[0].cast<T>(), ck.networks[1].cast<T>());
    return evaluate<T>([&](std::size_t s) { return embed_forward<T>(model, split.grids[s], nullptr); },
                       split.labels);
  }
  const auto net = ck.networks[0].cast<T>();
  return evaluate<T>([&](std::size_t s) { return net.forward(split.volumes[s]); }, split.labels);
}

}  // namespace

EvalResult evaluate_checkpoint(const fs::path& checkpoint, const fs::path& data_dir) {
  const auto ck = decode_checkpoint(read_file_bytes(checkpoint));
  auto get = [&](const std::string& key) {
    const auto it = ck.metadata.find(key);
    if (it == ck.metadata.end()) throw FormatError("metadata", fmt::format("checkpoint lacks '{}'", key));
    return it->second;
  };
  const TrainMode mode = parse_mode(get("mode"));
  const auto classes = split_list(get("classes"));
  const int coarse = std::stoi(get("coarse"));
  const int fine = std::stoi(get("fine"));
  const std::size_t want_nets = mode == TrainMode::MultiRes ? 2 : 1;
  if (ck.networks.size() != want_nets) {
    throw FormatError("networks", fmt::format("expected {} networks for mode {}", want_nets, mode_name(mode)));
  }

  const auto ext = sample_extension(mode);
  const auto files = fs::is_directory(data_dir / "test")
                         ? list_voxel_samples(data_dir, classes, Split::Test, ext, 0)
                         : list_class_files(data_dir, classes, ext, 0);
  if (files.empty()) throw DatasetError(fmt::format("no {} samples under {}", ext, data_dir.string()));
  const int res = mode == TrainMode::Dense ? coarse * fine : coarse;
  if (ck.scalar_bytes == 8) return evaluate_networks<double>(ck, mode, files, res, fine);
  return evaluate_networks<float>(ck, mode, files, res, fine);
}

}  // namespace mrvox
