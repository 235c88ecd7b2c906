#pragma once

#include "nbrush/mesh.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace nbrush {

// Parses ASCII OBJ. Only `v` and `f` records are used; polygons are
// fan-triangulated, negative (relative) indices are accepted, and `vn`/`vt`
// and grouping records are ignored. Throws ParseError with the line number.
TriangleMesh load_obj(std::string_view text);

// Writes `v` records with 9 significant digits, one `vn` per vertex and
// `f v//vn` faces.
std::string save_obj(const TriangleMesh& mesh);

TriangleMesh read_obj_file(const std::filesystem::path& path);
void write_obj_file(const std::filesystem::path& path, const TriangleMesh& mesh);

}  // namespace nbrush
