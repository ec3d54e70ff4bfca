#pragma once

// Occupancy fields to meshes: boundary extraction, deformation, weighted
// Laplacian smoothing, outlier filtering and tetrahedral export.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tetfield/shapefields.hpp"
#include "tetfield/trimesh.hpp"

namespace tetfield {

using Occupancy = std::vector<std::uint8_t>;

/// Boundary faces of the occupied region, oriented out of the occupied tets.
struct ExtractedSurface {
  std::vector<Vec3> vertices;
  std::vector<Triangle> faces;
  std::vector<std::uint32_t> vertex_map;  // surface vertex -> grid vertex, ascending
  std::vector<Vec3> deformation;          // per surface vertex; empty when none was supplied

  bool empty() const { return faces.empty(); }
};

/// bit = p > tau.
Occupancy threshold_occupancy(std::span<const double> probabilities, double tau = 0.5);

/// Faces between occupied tets and unoccupied or missing neighbours.
ExtractedSurface extract_surface(const TetGrid& grid, const Occupancy& occupied,
                                 std::span<const Vec3> vertex_deformation = {});

/// Occupied tets with at least one unoccupied or missing neighbour.
std::vector<std::uint8_t> surface_tets(const TetGrid& grid, const Occupancy& occupied);

inline constexpr double kDefaultGamma = 4.0;

/// Clears occupied surface tets whose deformation norm exceeds gamma * mu. One pass.
Occupancy deformation_filter(const TetGrid& grid, const Occupancy& occupied, std::span<const Vec3> tet_deformation,
                             double mu, double gamma = kDefaultGamma);

/// Mean over shapes of the mean surface-tet deformation norm (occupancy > 0.5).
double compute_mu(const std::vector<FieldSet>& data, const TetGrid& grid);

/// v + D(v) for every surface vertex.
ExtractedSurface apply_deformation(const ExtractedSurface& surface);

/// v <- beta v + (1 - beta) sum_j w_ij v_j over edge neighbours with
/// w_ij proportional to |cos(D_i, D_j)|; uniform where every weight vanishes.
ExtractedSurface weighted_laplacian_smooth(const ExtractedSurface& surface, double beta = 0.5, int iterations = 1);

/// Sum over vertices of |v_i - mean of edge neighbours|^2.
double laplacian_energy(const ExtractedSurface& surface);

/// Every directed edge is matched by its reverse.
bool is_closed(const ExtractedSurface& surface);
long euler_characteristic(const ExtractedSurface& surface);
TriMesh to_trimesh(const ExtractedSurface& surface);
void export_surface_obj(const ExtractedSurface& surface, const std::string& path);

struct ExtractOptions {
  double tau = 0.5;
  double beta = 0.5;
  double gamma = kDefaultGamma;
  int smooth_iters = 1;
  double mu = 0.0;  // filter scale; 0 disables the deformation filter
};

struct Extraction {
  Occupancy occupancy;  // after thresholding and filtering
  ExtractedSurface surface;
  std::size_t filtered = 0;
};

/// Threshold, filter, extract, deform, smooth.
Extraction extract_fields(const TetGrid& grid, const FieldSet& fields, const ExtractOptions& options);

struct TetMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 4>> tets;
  std::size_t interior_tets = 0;  // tets with no boundary face
  std::size_t pulled_back = 0;    // surface vertices moved toward the grid to keep volumes positive
  double min_volume = 0.0;
};

/// Every occupied tet; surface vertices take the surface positions and the
/// rest stay on the grid. Surface vertices of inverted tets are pulled back
/// toward their grid positions until every volume is positive.
TetMesh build_tet_mesh(const TetGrid& grid, const Occupancy& occupied, const ExtractedSurface& surface);
/// .vtk or .mesh by extension.
void export_tet_mesh(const TetMesh& mesh, const std::string& path);

}  // namespace tetfield
