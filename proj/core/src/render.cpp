// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/render.hpp"

#include <cstddef>
#include <span>
#include <sstream>

#include <fmt/format.h>

#include "mrvox/error.hpp"
#include "mrvox/grid_io.hpp"

namespace mrvox {

std::uint8_t slice_pixel(CellState state) {
  switch (state) {
    case CellState::Inside:
      return 128;
    case CellState::Boundary:
      return 255;
    default:
      return 0;
  }
}

GrayImage slice_image(const VoxelGrid& grid, int axis, int index) {
  const Dims& d = grid.dims();
  if (axis < 0 || axis > 2) throw Error(fmt::format("invalid slice axis {}", axis));
  if (index < 0 || index >= d[axis]) throw IndexError(fmt::format("slice {} outside [0, {})", index, d[axis]));
  const int u_axis = axis == 0 ? 1 : 0;
  const int v_axis = axis == 2 ? 1 : 2;
  GrayImage img{d[u_axis], d[v_axis], {}};
  img.pixels.resize(std::size_t(img.width) * std::size_t(img.height));
  int c[3];
  c[axis] = index;
  for (int v = 0; v < img.height; ++v) {
    c[v_axis] = v;
    for (int u = 0; u < img.width; ++u) {
      c[u_axis] = u;
      img.pixels[std::size_t(v) * std::size_t(img.width) + std::size_t(u)] =
          slice_pixel(grid.cells[flatten_index(c[0], c[1], c[2], d)]);
    }
  }
  return img;
}

std::string encode_pgm(const GrayImage& image) {
  std::string out = fmt::format("P5\n{} {}\n255\n", image.width, image.height);
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P5" || width < 0 || height < 0 || maxval != 255) throw ParseError("bad PGM header", 1);
  in.get();
  GrayImage img{width, height, std::vector<std::uint8_t>(std::size_t(width) * std::size_t(height))};
  in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (std::size_t(in.gcount()) != img.pixels.size()) throw ParseError("truncated PGM pixel data", 3);
  return img;
}

int parse_axis(char letter) {
  switch (letter) {
    case 'x':
      return 0;
    case 'y':
      return 1;
    case 'z':
      return 2;
    default:
      throw Error(fmt::format("unknown axis '{}', expected x, y or z", letter));
  }
}

std::vector<std::filesystem::path> render_slices(const VoxelGrid& grid, int axis,
                                                 const std::filesystem::path& out_dir) {
  if (axis < 0 || axis > 2) throw Error(fmt::format("invalid slice axis {}", axis));
  const char letter = "xyz"[axis];
  std::vector<std::filesystem::path> written;
  const int n = grid.dims()[axis];
  const int width = n < 1000 ? 3 : 6;
  for (int s = 0; s < n; ++s) {
    const auto path = out_dir / fmt::format("slice_{}_{:0{}}.pgm", letter, s, width);
    const std::string pgm = encode_pgm(slice_image(grid, axis, s));
    write_file_bytes(path, std::as_bytes(std::span(pgm.data(), pgm.size())));
    written.push_back(path);
  }
  return written;
}

}  // namespace mrvox
