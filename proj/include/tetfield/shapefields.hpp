#pragma once

// Occupancy / deformation encoding of a watertight surface on the finest grid.

#include <span>
#include <string>
#include <vector>

#include "tetfield/tetgrid.hpp"
#include "tetfield/trimesh.hpp"

namespace tetfield {

inline constexpr double kWindingThreshold = 0.5;
inline constexpr double kInverseDistanceFloor = 1e-12;
inline constexpr double kSurfacePerturbation = 1e-9;

/// Occupancy and deformation over the finest grid of a hierarchy.
/// Deformations are in unit-cube units.
struct FieldSet {
  int base_cubes = 0;
  int level = 0;
  std::vector<double> occupancy;          // K, {0,1} for ground truth, [0,1] for predictions
  std::vector<Vec3> tet_deformation;      // K
  std::vector<Vec3> vertex_deformation;   // V

  std::size_t num_tets() const { return occupancy.size(); }
  std::size_t num_vertices() const { return vertex_deformation.size(); }
};

/// Sparse inverse-centroid-distance averaging from tets to their incident
/// vertices; rows are convex weights.
class VertexAveraging {
 public:
  VertexAveraging() = default;
  VertexAveraging(const TetGrid& grid, const VertexIncidence& incidence);

  std::size_t num_vertices() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_tets() const { return num_tets_; }
  std::span<const std::uint32_t> tets_of(std::size_t v) const {
    return {tets_.data() + offsets_[v], tets_.data() + offsets_[v + 1]};
  }
  std::span<const double> weights_of(std::size_t v) const {
    return {weights_.data() + offsets_[v], weights_.data() + offsets_[v + 1]};
  }

  std::vector<Vec3> apply(std::span<const Vec3> per_tet) const;
  /// Row-major (rows x 3) variants used by the network losses.
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& per_tet) const;
  Eigen::MatrixXd apply_transpose(const Eigen::Ref<const Eigen::MatrixXd>& per_vertex) const;

 private:
  std::size_t num_tets_ = 0;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> tets_;
  std::vector<double> weights_;
};

/// Occupancy bit per tet: winding number at the centroid exceeds 0.5.
/// Centroids within 1e-10 of the surface are nudged 1e-9 along the nearest
/// face normal first. Non-watertight meshes produce a warning.
std::vector<double> compute_occupancy(const TriMesh& mesh, const TetGrid& grid);

/// closest_point(c_k) - c_k for every tet.
std::vector<Vec3> compute_tet_deformation(const TriMesh& mesh, const TetGrid& grid);

std::vector<Vec3> tet_to_vertex_deformation(const VertexAveraging& averaging, std::span<const Vec3> tet_deformation);

FieldSet encode_shape(const TriMesh& mesh, const GridHierarchy& hierarchy);
FieldSet encode_shape(const TriMesh& mesh, const GridHierarchy& hierarchy, const VertexAveraging& averaging);

enum class OccupancyEncoding : std::uint32_t { bits = 0, probabilities = 1 };

void save_fields(const FieldSet& fields, const std::string& path,
                 OccupancyEncoding encoding = OccupancyEncoding::bits);
FieldSet load_fields(const std::string& path);

}  // namespace tetfield
