#include "tetfield/trimesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "tetfield/meshio.hpp"

namespace tetfield {

namespace {

constexpr std::uint32_t kLeafSize = 4;

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }

  const double denom = va + vb + vc;
  if (denom == 0.0) {
    // Degenerate (zero-area) triangle: fall back to the closest edge point.
    Vec3 best = a;
    double best_d = (p - a).squaredNorm();
    for (const auto& [s, e] : {std::pair{a, b}, std::pair{b, c}, std::pair{c, a}}) {
      const Vec3 se = e - s;
      const double len2 = se.squaredNorm();
      const double t = len2 > 0.0 ? std::clamp((p - s).dot(se) / len2, 0.0, 1.0) : 0.0;
      const Vec3 q = s + t * se;
      if ((p - q).squaredNorm() < best_d) {
        best_d = (p - q).squaredNorm();
        best = q;
      }
    }
    return best;
  }
  const double v = vb / denom;
  const double w = vc / denom;
  return a + ab * v + ac * w;
}

double triangle_solid_angle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 x = a - p;
  const Vec3 y = b - p;
  const Vec3 z = c - p;
  const double lx = x.norm();
  const double ly = y.norm();
  const double lz = z.norm();
  const double num = x.dot(y.cross(z));
  const double den = lx * ly * lz + x.dot(y) * lz + x.dot(z) * ly + y.dot(z) * lx;
  return 2.0 * std::atan2(num, den);
}

TriMesh::TriMesh(std::vector<Vec3> vertices, std::vector<Triangle> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  for (const auto& f : faces_) {
    for (auto v : f) {
      require(v < vertices_.size(), ErrorCode::parse_error, "face references missing vertex");
    }
  }
  build_tree();
}

Aabb TriMesh::bounds() const {
  Aabb box;
  for (const auto& v : vertices_) box.grow(v);
  return box;
}

bool TriMesh::is_watertight() const {
  if (faces_.empty()) return false;
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
  for (const auto& f : faces_) {
    for (int i = 0; i < 3; ++i) {
      const auto a = f[i];
      const auto b = f[(i + 1) % 3];
      ++uses[{std::min(a, b), std::max(a, b)}];
    }
  }
  return std::all_of(uses.begin(), uses.end(), [](const auto& kv) { return kv.second == 2; });
}

long TriMesh::euler_characteristic() const {
  std::vector<bool> used(vertices_.size(), false);
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
  for (const auto& f : faces_) {
    for (int i = 0; i < 3; ++i) {
      used[f[i]] = true;
      const auto a = f[i];
      const auto b = f[(i + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  const long V = static_cast<long>(std::count(used.begin(), used.end(), true));
  return V - static_cast<long>(edges.size()) + static_cast<long>(faces_.size());
}

Vec3 TriMesh::face_normal(std::uint32_t f) const {
  const auto& t = faces_[f];
  const Vec3 n = (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double TriMesh::face_area(std::uint32_t f) const {
  const auto& t = faces_[f];
  return 0.5 * (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]).norm();
}

double TriMesh::surface_area() const {
  CompensatedSum s;
  for (std::uint32_t f = 0; f < faces_.size(); ++f) s.add(face_area(f));
  return s.value();
}

double TriMesh::enclosed_volume() const {
  CompensatedSum s;
  for (const auto& t : faces_) {
    s.add(vertices_[t[0]].dot(vertices_[t[1]].cross(vertices_[t[2]])) / 6.0);
  }
  return s.value();
}

void TriMesh::build_tree() {
  nodes_.clear();
  order_.resize(faces_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (faces_.empty()) return;
  std::vector<Vec3> centers(faces_.size());
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const auto& t = faces_[f];
    centers[f] = (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 3.0;
  }
  nodes_.reserve(2 * faces_.size() / kLeafSize + 2);
  nodes_.emplace_back();
  build_node(0, 0, static_cast<std::uint32_t>(faces_.size()), centers);
}

void TriMesh::build_node(std::uint32_t self, std::uint32_t begin, std::uint32_t end,
                         const std::vector<Vec3>& centers) {
  Aabb box;
  Aabb center_box;
  for (std::uint32_t i = begin; i < end; ++i) {
    for (auto v : faces_[order_[i]]) box.grow(vertices_[v]);
    center_box.grow(centers[order_[i]]);
  }
  nodes_[self].box = box;
  if (end - begin <= kLeafSize) {
    nodes_[self].first = begin;
    nodes_[self].count = end - begin;
    return;
  }
  int axis = 0;
  center_box.extent().maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (centers[a][axis] != centers[b][axis]) return centers[a][axis] < centers[b][axis];
                     return a < b;
                   });
  const auto left = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  nodes_.emplace_back();
  nodes_[self].first = left;
  nodes_[self].count = 0;
  build_node(left, begin, mid, centers);
  build_node(left + 1, mid, end, centers);
}

TriMesh::ClosestHit TriMesh::closest_point(const Vec3& p) const {
  require(!faces_.empty(), ErrorCode::empty_input, "closest point query on an empty mesh");
  ClosestHit best;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.squared_distance(p) >= best_d2) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t f = order_[i];
        const auto& t = faces_[f];
        const Vec3 q = closest_point_on_triangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
        const double d2 = (q - p).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && f < best.face)) {
          best_d2 = d2;
          best.point = q;
          best.face = f;
        }
      }
      continue;
    }
    const std::uint32_t l = node.first;
    const std::uint32_t r = node.first + 1;
    const double dl = nodes_[l].box.squared_distance(p);
    const double dr = nodes_[r].box.squared_distance(p);
    // Push the farther child first so the nearer one is searched first.
    if (dl <= dr) {
      stack[top++] = r;
      stack[top++] = l;
    } else {
      stack[top++] = l;
      stack[top++] = r;
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

double TriMesh::winding_number(const Vec3& p) const {
  double total = 0.0;
  for (const auto& t : faces_) total += triangle_solid_angle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
  return total / (4.0 * std::numbers::pi);
}

TriMesh normalize_to_unit_cube(const TriMesh& mesh, double margin) {
  require(margin >= 0.0 && margin < 0.5, ErrorCode::invalid_parameter, "margin must be in [0, 0.5)");
  if (mesh.vertices().empty()) return mesh;
  const Aabb box = mesh.bounds();
  const double extent = box.extent().maxCoeff();
  const double room = 1.0 - 2.0 * margin;
  const double scale = extent > room ? room / extent : 1.0;
  const Vec3 center = 0.5 * (box.lo + box.hi);
  std::vector<Vec3> verts;
  verts.reserve(mesh.vertices().size());
  for (const auto& v : mesh.vertices()) verts.push_back((v - center) * scale + Vec3::Constant(0.5));
  return TriMesh(std::move(verts), mesh.faces());
}

TriMesh load_and_normalize(const std::string& path, double margin) {
  RawTriangles raw = read_obj(path);
  return normalize_to_unit_cube(TriMesh(std::move(raw.vertices), std::move(raw.faces)), margin);
}

void save_obj(const TriMesh& mesh, const std::string& path) { write_obj(path, mesh.vertices(), mesh.faces()); }

}  // namespace tetfield
