// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mrvox/voxel_core.hpp"

namespace mrvox {

/// 8-bit grey image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Pixel value of a cell: Outside 0, Inside 128, Boundary 255.
std::uint8_t slice_pixel(CellState state);

/// Slice `index` across `axis` (0 = x, 1 = y, 2 = z). For z the image is
/// nx wide and ny tall, for y nx by nz, for x ny by nz; row 0 holds the
/// lowest index of the vertical axis.
GrayImage slice_image(const VoxelGrid& grid, int axis, int index);

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(const GrayImage& image);
/// Parses a P5 file as written by encode_pgm; throws ParseError otherwise.
GrayImage decode_pgm(const std::string& bytes);

/// Axis letter x, y or z to 0, 1 or 2; throws Error otherwise.
int parse_axis(char letter);

/// Writes one slice_<axis>_<index>.pgm per slice into `out_dir`.
std::vector<std::filesystem::path> render_slices(const VoxelGrid& grid, int axis, const std::filesystem::path& out_dir);

}  // namespace mrvox
