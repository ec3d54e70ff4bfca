#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tetfield/common.hpp"

namespace tetfield {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void grow(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool empty() const { return (lo.array() > hi.array()).any(); }
  Vec3 extent() const { return hi - lo; }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.squaredNorm();
  }
};

using Triangle = std::array<std::uint32_t, 3>;

/// Closest point on triangle (a, b, c) to p (Voronoi-region walk).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Signed solid angle subtended at p by triangle (a, b, c), in steradians.
double triangle_solid_angle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Triangle mesh with an axis-aligned bounding-volume tree over its faces.
class TriMesh {
 public:
  struct ClosestHit {
    Vec3 point = Vec3::Zero();
    double distance = 0.0;
    std::uint32_t face = 0;
  };

  TriMesh() = default;
  /// Throws parse_error when a face references a missing vertex.
  TriMesh(std::vector<Vec3> vertices, std::vector<Triangle> faces);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& faces() const { return faces_; }
  bool empty() const { return faces_.empty(); }
  Aabb bounds() const;

  /// Every undirected edge is used by exactly two faces.
  bool is_watertight() const;
  /// V - E + F.
  long euler_characteristic() const;
  double surface_area() const;
  /// Signed volume enclosed by a closed, outward-oriented mesh.
  double enclosed_volume() const;
  Vec3 face_normal(std::uint32_t f) const;
  double face_area(std::uint32_t f) const;

  ClosestHit closest_point(const Vec3& p) const;
  /// Sum of signed solid angles over all faces divided by 4 pi.
  double winding_number(const Vec3& p) const;

 private:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: range into order_; inner: index of left child
    std::uint32_t count = 0;  // 0 marks an inner node; right child is first + 1
  };

  void build_tree();
  void build_node(std::uint32_t self, std::uint32_t begin, std::uint32_t end, const std::vector<Vec3>& centers);

  std::vector<Vec3> vertices_;
  std::vector<Triangle> faces_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

/// Reads an OBJ and uniformly scales/translates it so its bounding box is
/// centred in the unit cube and fits inside [margin, 1 - margin]^3. Meshes that
/// already fit are only recentred.
TriMesh load_and_normalize(const std::string& path, double margin = 0.05);
TriMesh normalize_to_unit_cube(const TriMesh& mesh, double margin = 0.05);

void save_obj(const TriMesh& mesh, const std::string& path);

}  // namespace tetfield
