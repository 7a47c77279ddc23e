// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "mrvox/byte_io.hpp"
#include "mrvox/error.hpp"

namespace mrvox {

std::optional<Vec3> TriangleMesh::unit_normal(std::size_t t) const {
  if (has_normals()) return triangle_normals[t];
  const Triangle tri = triangle(t);
  const Vec3 n = cross(tri[1] - tri[0], tri[2] - tri[0]);
  const double len = norm(n);
  if (!(len > 0.0)) return std::nullopt;
  return n * (1.0 / len);
}

void TriangleMesh::validate() const {
  const auto nv = vertices.size();
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    for (auto v : tri) {
      if (v >= nv) throw ParseError(fmt::format("triangle {} references vertex {} of {}", t, v, nv));
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw ParseError(fmt::format("triangle {} repeats a vertex index", t));
    }
  }
  if (has_normals()) {
    if (triangle_normals.size() != triangles.size()) throw ParseError("normal count differs from triangle count");
    for (const auto& n : triangle_normals) {
      if (std::abs(norm(n) - 1.0) > 1e-6) throw ParseError("stored triangle normal is not unit length");
    }
  }
}

namespace {

// Splits text into whitespace-separated tokens per line, skipping blank lines
// and '#' comments.
class LineTokenizer {
 public:
  explicit LineTokenizer(std::string_view text) : text_(text) {}

  /// Advances to the next non-empty line. Returns false at end of input.
  bool next(std::vector<std::string_view>& tokens) {
    tokens.clear();
    while (pos_ < text_.size()) {
      auto end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) tokens.push_back(line.substr(start, i - start));
      }
      if (!tokens.empty()) return true;
    }
    return false;
  }

  std::size_t line() const { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

template <class T>
T parse_number(std::string_view token, std::size_t line, const char* what) {
  T value{};
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ParseError(fmt::format("expected {} but found '{}'", what, token), line);
  }
  return value;
}

std::string_view as_text(std::span<const std::byte> bytes) {
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

}  // namespace

TriangleMesh parse_off(std::string_view text) {
  LineTokenizer lines(text);
  std::vector<std::string_view> tok;
  if (!lines.next(tok)) throw ParseError("empty OFF input");

  // Header: "OFF", "OFF nv nf ne", or ModelNet's glued "OFFnv nf ne".
  std::string_view head = tok[0];
  if (head.substr(0, 3) != "OFF") throw ParseError("missing OFF header", lines.line());
  std::vector<std::string_view> counts;
  if (head.size() > 3) counts.push_back(head.substr(3));
  counts.insert(counts.end(), tok.begin() + 1, tok.end());
  if (counts.empty()) {
    if (!lines.next(tok)) throw ParseError("missing OFF count line", lines.line());
    counts = tok;
  }
  if (counts.size() < 2) throw ParseError("OFF count line needs vertex and face counts", lines.line());
  const auto header_line = lines.line();
  const auto nv = parse_number<std::uint64_t>(counts[0], header_line, "vertex count");
  const auto nf = parse_number<std::uint64_t>(counts[1], header_line, "face count");
  if (nv > std::numeric_limits<std::uint32_t>::max()) throw ParseError("vertex count too large", header_line);

  TriangleMesh mesh;
  mesh.vertices.reserve(nv);
  for (std::uint64_t v = 0; v < nv; ++v) {
    if (!lines.next(tok)) throw ParseError(fmt::format("expected {} vertices, found {}", nv, v), lines.line());
    if (tok.size() < 3) throw ParseError("vertex line needs 3 coordinates", lines.line());
    mesh.vertices.push_back({parse_number<double>(tok[0], lines.line(), "coordinate"),
                             parse_number<double>(tok[1], lines.line(), "coordinate"),
                             parse_number<double>(tok[2], lines.line(), "coordinate")});
  }

  mesh.triangles.reserve(nf);
  std::vector<std::uint32_t> poly;
  for (std::uint64_t f = 0; f < nf; ++f) {
    if (!lines.next(tok)) throw ParseError(fmt::format("expected {} faces, found {}", nf, f), lines.line());
    const auto n = parse_number<std::uint64_t>(tok[0], lines.line(), "face vertex count");
    if (n < 3) throw ParseError("face needs at least 3 vertices", lines.line());
    if (tok.size() < n + 1) throw ParseError("face line shorter than its vertex count", lines.line());
    poly.clear();
    for (std::uint64_t c = 0; c < n; ++c) {
      const auto idx = parse_number<std::uint64_t>(tok[c + 1], lines.line(), "vertex index");
      if (idx >= nv) throw ParseError(fmt::format("vertex index {} out of range [0, {})", idx, nv), lines.line());
      poly.push_back(static_cast<std::uint32_t>(idx));
    }
    // Fan split at the first vertex. Triangles that collapse onto a repeated
    // index carry no area and are dropped.
    for (std::size_t c = 1; c + 1 < poly.size(); ++c) {
      std::array<std::uint32_t, 3> tri{poly[0], poly[c], poly[c + 1]};
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
      mesh.triangles.push_back(tri);
    }
  }
  return mesh;
}

TriangleMesh parse_off(std::span<const std::byte> bytes) { return parse_off(as_text(bytes)); }

namespace {

void attach_stl_normals(TriangleMesh& mesh, std::vector<Vec3> normals) {
  const bool all_unit = std::all_of(normals.begin(), normals.end(),
                                    [](const Vec3& n) { return std::abs(norm(n) - 1.0) <= 1e-6; });
  if (all_unit && !normals.empty()) mesh.triangle_normals = std::move(normals);
}

TriangleMesh parse_stl_ascii(std::string_view text) {
  LineTokenizer lines(text);
  std::vector<std::string_view> tok;
  TriangleMesh mesh;
  std::vector<Vec3> normals;
  std::vector<Vec3> facet;
  bool in_facet = false;
  while (lines.next(tok)) {
    const auto key = tok[0];
    if (key == "facet") {
      if (in_facet) throw ParseError("nested facet", lines.line());
      in_facet = true;
      facet.clear();
      Vec3 n{};
      if (tok.size() >= 5 && tok[1] == "normal") {
        n = {parse_number<double>(tok[2], lines.line(), "normal"), parse_number<double>(tok[3], lines.line(), "normal"),
             parse_number<double>(tok[4], lines.line(), "normal")};
      }
      normals.push_back(n);
    } else if (key == "vertex") {
      if (!in_facet || tok.size() < 4) throw ParseError("misplaced vertex", lines.line());
      facet.push_back({parse_number<double>(tok[1], lines.line(), "coordinate"),
                       parse_number<double>(tok[2], lines.line(), "coordinate"),
                       parse_number<double>(tok[3], lines.line(), "coordinate")});
    } else if (key == "endfacet") {
      if (!in_facet || facet.size() != 3) throw ParseError("facet does not have exactly 3 vertices", lines.line());
      const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.insert(mesh.vertices.end(), facet.begin(), facet.end());
      mesh.triangles.push_back({base, base + 1, base + 2});
      in_facet = false;
    } else if (key == "solid" || key == "outer" || key == "endloop" || key == "endsolid") {
      continue;
    } else {
      throw ParseError(fmt::format("unexpected token '{}'", key), lines.line());
    }
  }
  if (in_facet) throw ParseError("unterminated facet", lines.line());
  attach_stl_normals(mesh, std::move(normals));
  return mesh;
}

TriangleMesh parse_stl_binary(std::span<const std::byte> bytes) {
  constexpr std::size_t kHeader = 80;
  constexpr std::size_t kRecord = 50;
  if (bytes.size() < kHeader + 4) throw ParseError("binary STL shorter than its 84-byte header");
  ByteReader reader(bytes);
  reader.skip(kHeader, "header");
  const auto count = reader.get<std::uint32_t>("facet count");
  if (reader.remaining() < std::size_t{count} * kRecord) {
    throw ParseError(fmt::format("binary STL truncated: header claims {} facets, payload holds {}", count,
                                 reader.remaining() / kRecord));
  }
  TriangleMesh mesh;
  std::vector<Vec3> normals;
  mesh.vertices.reserve(std::size_t{count} * 3);
  mesh.triangles.reserve(count);
  auto get_vec = [&reader] {
    const double x = reader.get<float>("facet");
    const double y = reader.get<float>("facet");
    const double z = reader.get<float>("facet");
    return Vec3{x, y, z};
  };
  for (std::uint32_t f = 0; f < count; ++f) {
    normals.push_back(get_vec());
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (int c = 0; c < 3; ++c) mesh.vertices.push_back(get_vec());
    mesh.triangles.push_back({base, base + 1, base + 2});
    reader.skip(2, "facet attribute");
  }
  attach_stl_normals(mesh, std::move(normals));
  return mesh;
}

}  // namespace

TriangleMesh parse_stl(std::span<const std::byte> bytes) {
  if (bytes.empty()) throw ParseError("empty STL input");
  if (bytes.size() >= 84) {
    ByteReader reader(bytes);
    reader.skip(80, "header");
    const auto count = reader.get<std::uint32_t>("facet count");
    if (bytes.size() == 84 + std::size_t{count} * 50) return parse_stl_binary(bytes);
  }
  std::string_view text = as_text(bytes);
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text.substr(first, 5) == "solid") return parse_stl_ascii(text);
  return parse_stl_binary(bytes);
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error("cannot read " + path.string());
  return bytes;
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto bytes = read_file_bytes(path);
  if (ext == ".off") return parse_off(bytes);
  if (ext == ".stl") return parse_stl(bytes);
  throw ParseError("unsupported mesh extension '" + ext + "'");
}

std::string write_off(const TriangleMesh& mesh) {
  std::string out = fmt::format("OFF\n{} {} 0\n", mesh.vertices.size(), mesh.triangles.size());
  for (const auto& v : mesh.vertices) out += fmt::format("{} {} {}\n", v.x, v.y, v.z);
  for (const auto& t : mesh.triangles) out += fmt::format("3 {} {} {}\n", t[0], t[1], t[2]);
  return out;
}

Aabb compute_aabb(const TriangleMesh& mesh, double pad_fraction) {
  if (mesh.vertices.empty()) throw EmptyMeshError("cannot bound a mesh with no vertices");
  if (!(pad_fraction >= 0.0)) throw Error("pad fraction must be non-negative");
  Aabb box{mesh.vertices.front(), mesh.vertices.front()};
  for (const auto& v : mesh.vertices) {
    box.min = min(box.min, v);
    box.max = max(box.max, v);
  }
  const Vec3 ext = box.extent();
  double largest = std::max({ext.x, ext.y, ext.z});
  // A single point has no extent to scale from; use one model unit.
  if (largest == 0.0) largest = 1.0;
  for (int a = 0; a < 3; ++a) {
    const double pad = pad_fraction * (ext[a] > 0.0 ? ext[a] : largest);
    box.min[a] -= pad;
    box.max[a] += pad;
  }
  return box;
}

}  // namespace mrvox
