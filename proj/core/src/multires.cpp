// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/multires.hpp"

#include <optional>

#include <fmt/format.h>

#include "mrvox/byte_io.hpp"
#include "mrvox/error.hpp"
#include "mrvox/parallel.hpp"

namespace mrvox {

PrefixSumIndex exclusive_scan_flags(std::span<const std::uint8_t> flags) {
  PrefixSumIndex index;
  index.offsets.resize(flags.size());
  std::uint32_t running = 0;
  for (std::size_t v = 0; v < flags.size(); ++v) {
    index.offsets[v] = running;
    running += flags[v] ? 1u : 0u;
  }
  index.total = running;
  return index;
}

PrefixSumIndex build_prefix_index(const VoxelGrid& grid) {
  std::vector<std::uint8_t> flags(grid.cells.size());
  for (std::size_t v = 0; v < flags.size(); ++v) flags[v] = grid.cells[v] == CellState::Boundary;
  return exclusive_scan_flags(flags);
}

std::span<const CellState> MultiResGrid::block(std::size_t coarse_flat) const {
  if (coarse_flat >= coarse.cells.size() || coarse.cells[coarse_flat] != CellState::Boundary) {
    throw IndexError(fmt::format("coarse cell {} has no fine block", coarse_flat));
  }
  return {fine_cells.data() + std::size_t(index.offsets[coarse_flat]) * block_size(), block_size()};
}

std::vector<std::size_t> MultiResGrid::boundary_cells() const {
  std::vector<std::size_t> out;
  out.reserve(index.total);
  for (std::size_t v = 0; v < coarse.cells.size(); ++v) {
    if (coarse.cells[v] == CellState::Boundary) out.push_back(v);
  }
  return out;
}

MultiResGrid voxelize_fine(const TriangleMesh& mesh, const VoxelGrid& coarse, const TriangleBuffer& buffer,
                           int fine_factor, const FineOptions& options) {
  if (fine_factor < 1) throw Error("fine factor must be >= 1");
  if (buffer.overflowed()) {
    throw OverflowedBufferError(fmt::format("coarse triangle buffer overflowed (capacity {}, need {})",
                                            buffer.capacity(), buffer.max_count()));
  }
  if (buffer.voxel_count() != coarse.cells.size()) throw Error("triangle buffer does not match the coarse grid");

  MultiResGrid mr{coarse, fine_factor, build_prefix_index(coarse), {}, {}, options.inside_fill};
  if (options.normals && !mr.coarse.has_normals()) mr.coarse = average_normals(mesh, buffer, std::move(mr.coarse));
  if (!options.normals) mr.coarse.normals.clear();

  const std::size_t block = mr.block_size();
  mr.fine_cells.assign(std::size_t(mr.index.total) * block, CellState::Outside);
  if (options.normals) mr.fine_normals.assign(mr.fine_cells.size(), Normal3f{0.f, 0.f, 0.f});

  const GridSpec fine_spec = mr.effective_spec();
  std::optional<ParityClassifier> parity;
  if (options.inside_fill && mr.index.total > 0) parity.emplace(mesh, fine_spec);

  const auto boundary = mr.boundary_cells();
  const Dims& cdims = coarse.dims();
  const int F = fine_factor;

  // Blocks are independent: each writes only its own F^3 range.
  parallel_for(boundary.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> hits;
    for (std::size_t b = begin; b < end; ++b) {
      const std::size_t cv = boundary[b];
      const CellIndex c = unflatten_index(cv, cdims);
      const auto tris = buffer.triangles(cv);
      const std::size_t base = std::size_t(mr.index.offsets[cv]) * block;
      for (int lk = 0; lk < F; ++lk) {
        for (int lj = 0; lj < F; ++lj) {
          for (int li = 0; li < F; ++li) {
            const int gi = c.i * F + li;
            const int gj = c.j * F + lj;
            const int gk = c.k * F + lk;
            const Aabb box = fine_spec.cell_box(gi, gj, gk);
            hits.clear();
            for (auto t : tris) {
              if (tri_box_intersect(mesh.triangle(t), box)) hits.push_back(t);
            }
            const std::size_t slot = base + (std::size_t(lk) * F + lj) * F + li;
            if (!hits.empty()) {
              mr.fine_cells[slot] = CellState::Boundary;
              if (options.normals) mr.fine_normals[slot] = average_unit_normals(mesh, hits);
            } else if (parity && parity->inside(gi, gj, gk)) {
              mr.fine_cells[slot] = CellState::Inside;
            }
          }
        }
      }
    }
  });
  return mr;
}

MultiResGrid voxelize_multires(const TriangleMesh& mesh, const Aabb& box, Dims coarse_dims, int fine_factor,
                               const FineOptions& options) {
  const GridSpec spec(coarse_dims, box);
  auto boundary = classify_boundary_with_retry(mesh, spec);
  VoxelGrid coarse = std::move(boundary.grid);
  if (options.inside_fill) coarse = fill_inside(std::move(coarse), mesh);
  return voxelize_fine(mesh, coarse, boundary.buffer, fine_factor, options);
}

VoxelGrid flatten_to_dense(const MultiResGrid& mr) {
  VoxelGrid dense(mr.effective_spec());
  const bool normals = mr.has_normals() && !mr.fine_normals.empty();
  if (normals) dense.normals.assign(dense.cells.size(), Normal3f{0.f, 0.f, 0.f});
  const Dims& cdims = mr.coarse.dims();
  const Dims& ddims = dense.dims();
  const int F = mr.fine_factor;
  const std::size_t block = mr.block_size();
  for (std::size_t cv = 0; cv < mr.coarse.cells.size(); ++cv) {
    const CellIndex c = unflatten_index(cv, cdims);
    const CellState state = mr.coarse.cells[cv];
    const std::size_t base = std::size_t(mr.index.offsets[cv]) * block;
    for (int lk = 0; lk < F; ++lk) {
      for (int lj = 0; lj < F; ++lj) {
        for (int li = 0; li < F; ++li) {
          const std::size_t dv = flatten_index(c.i * F + li, c.j * F + lj, c.k * F + lk, ddims);
          if (state != CellState::Boundary) {
            dense.cells[dv] = state;
            continue;
          }
          const std::size_t slot = base + (std::size_t(lk) * F + lj) * F + li;
          dense.cells[dv] = mr.fine_cells[slot];
          if (normals) dense.normals[dv] = mr.fine_normals[slot];
        }
      }
    }
  }
  return dense;
}

namespace {

constexpr std::uint32_t kFlagNormals = 1u << 0;
constexpr std::uint32_t kFlagInsideFill = 1u << 1;

void put_normal(ByteWriter& w, const Normal3f& n) {
  for (float c : n) w.put(c);
}

Normal3f get_normal(ByteReader& r, const char* section) {
  Normal3f n{};
  for (auto& c : n) c = r.get<float>(section);
  return n;
}

CellState to_state(std::uint8_t raw, const char* section) {
  if (raw > 2) throw FormatError(section, fmt::format("invalid cell state {}", raw));
  return static_cast<CellState>(raw);
}

}  // namespace

std::vector<std::byte> serialize(const MultiResGrid& mr) {
  ByteWriter w;
  w.put_tag("MRVX");
  w.put(kMrvxVersion);
  const Dims& d = mr.coarse.dims();
  w.put(std::uint32_t(d.nx));
  w.put(std::uint32_t(d.ny));
  w.put(std::uint32_t(d.nz));
  const Aabb& box = mr.coarse.spec.box();
  for (int a = 0; a < 3; ++a) w.put(box.min[a]);
  for (int a = 0; a < 3; ++a) w.put(box.max[a]);
  w.put(std::uint32_t(mr.fine_factor));
  std::uint32_t flags = 0;
  if (mr.has_normals()) flags |= kFlagNormals;
  if (mr.inside_fill) flags |= kFlagInsideFill;
  w.put(flags);
  for (auto c : mr.coarse.cells) w.put(static_cast<std::uint8_t>(c));
  for (auto o : mr.index.offsets) w.put(o);
  w.put(mr.index.total);
  for (auto c : mr.fine_cells) w.put(static_cast<std::uint8_t>(c));
  if (flags & kFlagNormals) {
    for (std::size_t v = 0; v < mr.coarse.cells.size(); ++v) {
      if (mr.coarse.cells[v] == CellState::Boundary) put_normal(w, mr.coarse.normals[v]);
    }
    std::uint32_t fine_boundary = 0;
    for (auto c : mr.fine_cells) fine_boundary += c == CellState::Boundary;
    w.put(fine_boundary);
    for (std::size_t s = 0; s < mr.fine_cells.size(); ++s) {
      if (mr.fine_cells[s] == CellState::Boundary) {
        put_normal(w, mr.fine_normals.empty() ? Normal3f{0.f, 0.f, 0.f} : mr.fine_normals[s]);
      }
    }
  }
  return w.release();
}

MultiResGrid deserialize(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  r.require(4, "magic");
  if (!r.tag_matches("MRVX")) throw FormatError("magic", "not an MRVX file");
  r.skip(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kMrvxVersion) throw FormatError("version", fmt::format("unsupported version {}", version));

  Dims dims;
  dims.nx = int(r.get<std::uint32_t>("header"));
  dims.ny = int(r.get<std::uint32_t>("header"));
  dims.nz = int(r.get<std::uint32_t>("header"));
  Aabb box;
  for (int a = 0; a < 3; ++a) box.min[a] = r.get<double>("header");
  for (int a = 0; a < 3; ++a) box.max[a] = r.get<double>("header");
  const auto fine_factor = r.get<std::uint32_t>("header");
  const auto flags = r.get<std::uint32_t>("header");
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1 || dims.count() > (std::size_t{1} << 30)) {
    throw FormatError("header", "invalid coarse dims");
  }
  if (fine_factor < 1 || fine_factor > 1024) throw FormatError("header", "invalid fine factor");
  if (flags & ~(kFlagNormals | kFlagInsideFill)) throw FormatError("header", "unknown flag bits");
  std::optional<GridSpec> spec;
  try {
    spec.emplace(dims, box);
  } catch (const Error& e) {
    throw FormatError("header", e.what());
  }

  MultiResGrid mr{VoxelGrid(*spec), int(fine_factor), {}, {}, {}, (flags & kFlagInsideFill) != 0};
  const std::size_t n = dims.count();
  r.require(n, "coarse cells");
  for (std::size_t v = 0; v < n; ++v) mr.coarse.cells[v] = to_state(r.get<std::uint8_t>("coarse cells"), "coarse cells");

  mr.index.offsets.resize(n);
  r.require(n * 4, "prefix offsets");
  for (auto& o : mr.index.offsets) o = r.get<std::uint32_t>("prefix offsets");
  mr.index.total = r.get<std::uint32_t>("total");
  if (mr.index != build_prefix_index(mr.coarse)) {
    throw FormatError("prefix offsets", "offsets do not match the coarse Boundary cells");
  }

  const std::size_t fine_n = std::size_t(mr.index.total) * mr.block_size();
  r.require(fine_n, "fine cells");
  mr.fine_cells.resize(fine_n);
  for (auto& c : mr.fine_cells) c = to_state(r.get<std::uint8_t>("fine cells"), "fine cells");

  if (flags & kFlagNormals) {
    mr.coarse.normals.assign(n, Normal3f{0.f, 0.f, 0.f});
    r.require(std::size_t(mr.index.total) * 12, "coarse normals");
    for (std::size_t v = 0; v < n; ++v) {
      if (mr.coarse.cells[v] == CellState::Boundary) mr.coarse.normals[v] = get_normal(r, "coarse normals");
    }
    const auto count = r.get<std::uint32_t>("fine normals");
    std::uint32_t expected = 0;
    for (auto c : mr.fine_cells) expected += c == CellState::Boundary;
    if (count != expected) {
      throw FormatError("fine normals", fmt::format("count {} != {} fine Boundary cells", count, expected));
    }
    r.require(std::size_t(count) * 12, "fine normals");
    mr.fine_normals.assign(fine_n, Normal3f{0.f, 0.f, 0.f});
    for (std::size_t s = 0; s < fine_n; ++s) {
      if (mr.fine_cells[s] == CellState::Boundary) mr.fine_normals[s] = get_normal(r, "fine normals");
    }
  }
  if (r.remaining() != 0) throw FormatError("trailer", fmt::format("{} unexpected trailing bytes", r.remaining()));
  return mr;
}

}  // namespace mrvox
