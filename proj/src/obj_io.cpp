#include "nbrush/obj_io.hpp"

#include "nbrush/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace nbrush {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(std::string_view token, std::size_t line) {
  double value = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("invalid number '" + std::string(token) + "'", line);
  }
  return value;
}

// Resolves the vertex part of "i", "i/t", "i//n" or "i/t/n" to a 0-based index.
int parse_index(std::string_view token, std::size_t vertex_count, std::size_t line) {
  const auto slash = token.find('/');
  const std::string_view head = token.substr(0, slash);
  long value = 0;
  auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
  if (ec != std::errc() || ptr != head.data() + head.size() || value == 0) {
    throw ParseError("invalid face index '" + std::string(token) + "'", line);
  }
  const long resolved = value > 0 ? value - 1 : static_cast<long>(vertex_count) + value;
  if (resolved < 0 || resolved >= static_cast<long>(vertex_count)) {
    throw ParseError("face index " + std::to_string(value) + " out of range (" +
                         std::to_string(vertex_count) + " vertices defined)",
                     line);
  }
  return static_cast<int>(resolved);
}

}  // namespace

TriangleMesh load_obj(std::string_view text) {
  TriangleMesh mesh;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto tokens = split_ws(line);
    const std::string_view tag = tokens[0];
    if (tag == "v") {
      if (tokens.size() < 4) throw ParseError("vertex record needs 3 coordinates", line_no);
      Vec3 p(parse_double(tokens[1], line_no), parse_double(tokens[2], line_no), parse_double(tokens[3], line_no));
      if (!p.allFinite()) throw ParseError("non-finite vertex coordinate", line_no);
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      if (tokens.size() < 4) throw ParseError("face record needs at least 3 indices", line_no);
      std::vector<int> poly;
      poly.reserve(tokens.size() - 1);
      for (std::size_t k = 1; k < tokens.size(); ++k) {
        poly.push_back(parse_index(tokens[k], mesh.vertices.size(), line_no));
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        const Face f{poly[0], poly[k], poly[k + 1]};
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
          throw ParseError("face repeats a vertex index", line_no);
        }
        mesh.faces.push_back(f);
      }
    }
    // vn, vt, o, g, s, usemtl, mtllib and unknown records are ignored.
  }
  return mesh;
}

std::string save_obj(const TriangleMesh& mesh) {
  const auto normals = vertex_normals(mesh);
  std::string out;
  out.reserve(mesh.vertices.size() * 80 + mesh.faces.size() * 40);
  char buf[128];
  for (const Vec3& p : mesh.vertices) {
    const int n = std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out.append(buf, n);
  }
  for (const Vec3& nrm : normals) {
    const int n = std::snprintf(buf, sizeof buf, "vn %.6g %.6g %.6g\n", nrm.x(), nrm.y(), nrm.z());
    out.append(buf, n);
  }
  for (const Face& f : mesh.faces) {
    const int n = std::snprintf(buf, sizeof buf, "f %d//%d %d//%d %d//%d\n", f[0] + 1, f[0] + 1, f[1] + 1,
                                f[1] + 1, f[2] + 1, f[2] + 1);
    out.append(buf, n);
  }
  return out;
}

TriangleMesh read_obj_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return load_obj(ss.str());
  } catch (const ParseError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_obj_file(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << save_obj(mesh);
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace nbrush
