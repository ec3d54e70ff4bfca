#pragma once

// Plain-text mesh formats: Wavefront OBJ (triangles), legacy VTK
// unstructured grid (tets), MEDIT .mesh (tets).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tetfield/common.hpp"

namespace tetfield {

struct RawTriangles {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
};

struct RawTets {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 4>> tets;
};

/// Reads `v` and `f` records; faces may use `i`, `i/t`, `i/t/n`, `i//n` and
/// negative (relative) indices. Non-triangular faces are rejected.
RawTriangles read_obj(const std::string& path);
void write_obj(const std::string& path, const std::vector<Vec3>& vertices,
               const std::vector<std::array<std::uint32_t, 3>>& faces);

void write_vtk_tets(const std::string& path, const std::vector<Vec3>& vertices,
                    const std::vector<std::array<std::uint32_t, 4>>& tets);
RawTets read_vtk_tets(const std::string& path);

void write_medit_tets(const std::string& path, const std::vector<Vec3>& vertices,
                      const std::vector<std::array<std::uint32_t, 4>>& tets);
RawTets read_medit_tets(const std::string& path);

/// Writes VTK or MEDIT depending on the extension (.vtk / .mesh).
void write_tets_by_extension(const std::string& path, const std::vector<Vec3>& vertices,
                             const std::vector<std::array<std::uint32_t, 4>>& tets);

}  // namespace tetfield
