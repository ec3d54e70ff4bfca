#pragma once

// Conforming tetrahedral grids of the unit cube and their 1->8 subdivision
// hierarchy.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tetfield/common.hpp"

namespace tetfield {

inline constexpr std::int64_t kNoNeighbor = -1;

using TetIndices = std::array<std::uint32_t, 4>;
using NeighborSlots = std::array<std::int64_t, 4>;

/// One level of the tetrahedral grid.
///
/// Canonical vertex order (a, b, c, d) has positive signed volume. Neighbor
/// slot s holds the tet across the face opposite vertex s, or kNoNeighbor on
/// the cube boundary. Subdivision splits the interior octahedron along
/// midpoint(a, b) - midpoint(c, d).
struct TetGrid {
  int level = 1;
  int base_cubes = 1;
  std::vector<Vec3> vertices;
  std::vector<TetIndices> tets;
  std::vector<NeighborSlots> neighbors;
  std::vector<Vec3> centroids;
  /// back_slot[k][s] is the slot of neighbors[k][s] that points back at k
  /// (-1 where there is no neighbor). Derived; used by transposed stencils.
  std::vector<std::array<std::int8_t, 4>> back_slot;

  std::size_t num_tets() const { return tets.size(); }
  std::size_t num_vertices() const { return vertices.size(); }
  double signed_volume(std::size_t k) const;
  /// Vertex indices of the face opposite slot s, ordered so the normal points out of tet k.
  std::array<std::uint32_t, 3> outward_face(std::size_t k, int s) const;
  /// Recomputes centroids, neighbors and back slots from vertices and tets.
  void rebuild_derived();
  bool operator==(const TetGrid& other) const;
};

/// Freudenthal split of an m x m x m cube lattice, 6 tets per cube, all
/// sharing the (0,0,0)-(1,1,1) diagonal direction.
TetGrid build_base_grid(int cubes_per_axis);

struct Subdivision {
  TetGrid grid;
  /// child_map[k] lists the 8 children of parent tet k in the refined grid.
  std::vector<std::array<std::uint32_t, 8>> child_map;
};

Subdivision subdivide(const TetGrid& grid);

/// CSR list of incident tets per vertex.
struct VertexIncidence {
  std::vector<std::uint32_t> offsets;
  std::vector<std::uint32_t> tets;

  std::span<const std::uint32_t> of(std::size_t v) const {
    return {tets.data() + offsets[v], tets.data() + offsets[v + 1]};
  }
  static VertexIncidence build(const TetGrid& grid);
};

inline constexpr std::size_t kDefaultTetCap = std::size_t{1} << 24;

struct GridHierarchy {
  std::vector<TetGrid> grids;  // grids[0] is level 1
  std::vector<std::vector<std::array<std::uint32_t, 8>>> child_map;  // per level n < N
  std::vector<std::vector<std::uint32_t>> parent_map;                // per level n > 1, index n-2
  std::vector<VertexIncidence> vertex_incidence;                     // per level

  int levels() const { return static_cast<int>(grids.size()); }
  const TetGrid& level(int n) const { return grids.at(static_cast<std::size_t>(n - 1)); }
  const TetGrid& finest() const { return grids.back(); }
  const VertexIncidence& finest_incidence() const { return vertex_incidence.back(); }
  /// Children of tet k at level n (n < levels()).
  const std::array<std::uint32_t, 8>& children(int n, std::size_t k) const {
    return child_map[static_cast<std::size_t>(n - 1)][k];
  }
};

GridHierarchy build_hierarchy(int cubes_per_axis, int levels, std::size_t max_tets = kDefaultTetCap);

struct ValidationReport {
  bool conforming = true;
  bool adjacency_symmetric = true;
  bool positive_volumes = true;
  bool volume_total_ok = true;
  bool boundary_consistent = true;
  double total_volume = 0.0;
  double min_volume = 0.0;
  std::size_t nonconforming_faces = 0;
  std::size_t asymmetric_entries = 0;
  std::size_t nonpositive_tets = 0;
  std::size_t boundary_mismatches = 0;
  std::vector<std::string> messages;

  bool all_pass() const {
    return conforming && adjacency_symmetric && positive_volumes && volume_total_ok && boundary_consistent;
  }
};

ValidationReport validate(const TetGrid& grid);

/// Smallest dihedral angle (radians) over all tets.
double min_dihedral_angle(const TetGrid& grid);

void save_grid(const TetGrid& grid, const std::string& path);
TetGrid load_grid(const std::string& path);

/// Loads a finest-level grid file and rebuilds the hierarchy it belongs to,
/// checking the stored grid matches the rebuilt finest level.
GridHierarchy load_hierarchy(const std::string& path, std::size_t max_tets = kDefaultTetCap);

void export_grid_vtk(const TetGrid& grid, const std::string& path);
void export_grid_medit(const TetGrid& grid, const std::string& path);

}  // namespace tetfield
