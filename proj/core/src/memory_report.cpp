// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/memory_report.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "mrvox/grid_io.hpp"

namespace mrvox {

double RepresentationStats::mean_multires_cells() const {
  if (multires_cells.empty()) return 0.0;
  double sum = 0.0;
  for (auto c : multires_cells) sum += double(c);
  return sum / double(multires_cells.size());
}

double RepresentationStats::fraction_at_most_half_dense() const {
  if (multires_cells.empty()) return 0.0;
  const auto n = std::count_if(multires_cells.begin(), multires_cells.end(),
                               [&](std::size_t c) { return 2 * c <= dense_cells; });
  return double(n) / double(multires_cells.size());
}

std::size_t activation_elements(const Shape& input, const std::vector<LayerSpec>& layers) {
  return Network<float>(input, layers).activation_count();
}

std::optional<RepresentationStats> representation_stats(const ExperimentConfig& config) {
  const auto classes = resolve_classes(config);
  const auto dir = config.resolved_voxel_dir();
  RepresentationStats stats;
  const Dims dims{config.coarse, config.coarse, config.coarse};
  stats.coarse_cells = dims.count();
  stats.dense_cells = dims.scaled(config.fine).count();
  for (Split split : {Split::Train, Split::Test}) {
    const std::size_t limit = split == Split::Train ? config.max_train_per_class : config.max_test_per_class;
    for (const auto& s : list_voxel_samples(dir, classes, split, kMrvxExtension, limit)) {
      const auto mr = read_mrvx(s.path);
      if (mr.coarse.dims() != dims || mr.fine_factor != config.fine) continue;
      stats.multires_cells.push_back(mr.stored_cell_count());
      stats.max_boundary = std::max<std::size_t>(stats.max_boundary, mr.boundary_count());
    }
  }
  stats.samples = stats.multires_cells.size();
  if (stats.samples == 0) return std::nullopt;
  return stats;
}

MemoryReport memory_report(std::span<const ExperimentConfig> configs) {
  MemoryReport report;
  for (const auto& cfg : configs) {
    const auto classes = resolve_classes(cfg);
    auto coarse_layers = parse_layers(cfg.coarse_net);
    coarse_layers.push_back(LayerSpec::dense(int(classes.size())));
    ModeMemory m;
    m.mode = cfg.mode;
    m.fine = cfg.fine;
    m.resolution = cfg.mode == TrainMode::Dense ? cfg.effective_resolution() : cfg.coarse;
    const Dims dims{m.resolution, m.resolution, m.resolution};
    const Network<float> coarse(volume_shape(dims), coarse_layers);
    m.parameters = coarse.parameter_count();
    m.activations = coarse.activation_count();
    if (cfg.mode == TrainMode::MultiRes) {
      const Network<float> fine({1, cfg.fine, cfg.fine, cfg.fine}, parse_layers(cfg.fine_net));
      m.parameters += fine.parameter_count();
      m.activations += fine.activation_count();
      m.representation = representation_stats(cfg);
      if (m.representation) m.retained_fine_activations = m.representation->max_boundary * fine.activation_count();
      m.label = fmt::format("multires {}^3 + {}^3", cfg.coarse, cfg.fine);
    } else {
      m.label = fmt::format("{} {}^3", mode_name(cfg.mode), m.resolution);
    }
    report.modes.push_back(std::move(m));
  }
  return report;
}

std::string format_memory_report(const MemoryReport& report) {
  std::string out = fmt::format("{:<24} {:>12} {:>14} {:>16}\n", "config", "parameters", "activations",
                                "retained_fine");
  for (const auto& m : report.modes) {
    out += fmt::format("{:<24} {:>12} {:>14} {:>16}\n", m.label, m.parameters, m.activations,
                       m.retained_fine_activations);
  }
  for (const auto& a : report.modes) {
    for (const auto& b : report.modes) {
      if (&a == &b || a.activations <= b.activations) continue;
      out += fmt::format("activation ratio {} / {}: {:.2f}\n", a.label, b.label,
                         double(a.activations) / double(b.activations));
    }
  }
  for (const auto& m : report.modes) {
    if (!m.representation) continue;
    const auto& r = *m.representation;
    const auto [lo, hi] = std::minmax_element(r.multires_cells.begin(), r.multires_cells.end());
    out += fmt::format(
        "representation {} over {} samples: coarse {} cells, dense {} cells, multires min {} mean {:.1f} max {}, "
        "{:.1f}% at most half of dense\n",
        m.label, r.samples, r.coarse_cells, r.dense_cells, *lo, r.mean_multires_cells(), *hi,
        100.0 * r.fraction_at_most_half_dense());
  }
  return out;
}

}  // namespace mrvox
