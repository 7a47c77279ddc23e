// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Analytic memory accounting: exact parameter and activation element counts
// derived from layer shapes, and stored cell counts read from voxelized data.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrvox/pipeline.hpp"

namespace mrvox {

struct RepresentationStats {
  std::size_t samples = 0;
  std::size_t coarse_cells = 0;
  /// Cells of the dense grid at the effective resolution.
  std::size_t dense_cells = 0;
  /// Per sample: coarse cells + boundary count * F^3, as stored.
  std::vector<std::size_t> multires_cells;
  std::size_t max_boundary = 0;

  double mean_multires_cells() const;
  /// Fraction of samples whose multi-res count is <= half the dense count.
  double fraction_at_most_half_dense() const;
};

struct ModeMemory {
  std::string label;
  TrainMode mode = TrainMode::MultiRes;
  int resolution = 0;
  int fine = 0;
  std::size_t parameters = 0;
  /// Per-sample peak activation elements: every layer output plus the input.
  /// For multires this is the coarse net plus one fine-net evaluation.
  std::size_t activations = 0;
  /// Multires only: fine activations kept for the backward pass when every
  /// Boundary cell of the largest sample is cached at once.
  std::size_t retained_fine_activations = 0;
  std::optional<RepresentationStats> representation;
};

struct MemoryReport {
  std::vector<ModeMemory> modes;
};

/// Activation count of a stack on one sample (layer outputs plus input).
std::size_t activation_elements(const Shape& input, const std::vector<LayerSpec>& layers);

/// Stored cell statistics over every .mrvx file of both splits.
std::optional<RepresentationStats> representation_stats(const ExperimentConfig& config);

MemoryReport memory_report(std::span<const ExperimentConfig> configs);

std::string format_memory_report(const MemoryReport& report);

}  // namespace mrvox
