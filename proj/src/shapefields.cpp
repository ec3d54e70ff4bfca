#include "tetfield/shapefields.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"

namespace tetfield {

namespace {

constexpr std::uint32_t kFieldVersion = 1;

}  // namespace

VertexAveraging::VertexAveraging(const TetGrid& grid, const VertexIncidence& incidence)
    : num_tets_(grid.num_tets()), offsets_(incidence.offsets), tets_(incidence.tets) {
  weights_.resize(tets_.size());
  for (std::size_t v = 0; v + 1 < offsets_.size(); ++v) {
    const auto begin = offsets_[v];
    const auto end = offsets_[v + 1];
    require(end > begin, ErrorCode::invalid_parameter, "vertex without incident tets");
    double total = 0.0;
    for (auto i = begin; i < end; ++i) {
      const double d = (grid.vertices[v] - grid.centroids[tets_[i]]).norm();
      weights_[i] = 1.0 / std::max(d, kInverseDistanceFloor);
      total += weights_[i];
    }
    for (auto i = begin; i < end; ++i) weights_[i] /= total;
  }
}

std::vector<Vec3> VertexAveraging::apply(std::span<const Vec3> per_tet) const {
  require(per_tet.size() == num_tets_, ErrorCode::shape_mismatch, "tet field length");
  std::vector<Vec3> out(num_vertices(), Vec3::Zero());
  for (std::size_t v = 0; v < out.size(); ++v) {
    for (auto i = offsets_[v]; i < offsets_[v + 1]; ++i) out[v] += weights_[i] * per_tet[tets_[i]];
  }
  return out;
}

Eigen::MatrixXd VertexAveraging::apply(const Eigen::Ref<const Eigen::MatrixXd>& per_tet) const {
  require(static_cast<std::size_t>(per_tet.rows()) == num_tets_, ErrorCode::shape_mismatch, "tet field rows");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_vertices()), per_tet.cols());
  for (std::size_t v = 0; v < num_vertices(); ++v) {
    for (auto i = offsets_[v]; i < offsets_[v + 1]; ++i) out.row(v) += weights_[i] * per_tet.row(tets_[i]);
  }
  return out;
}

Eigen::MatrixXd VertexAveraging::apply_transpose(const Eigen::Ref<const Eigen::MatrixXd>& per_vertex) const {
  require(static_cast<std::size_t>(per_vertex.rows()) == num_vertices(), ErrorCode::shape_mismatch,
          "vertex field rows");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_tets_), per_vertex.cols());
  for (std::size_t v = 0; v < num_vertices(); ++v) {
    for (auto i = offsets_[v]; i < offsets_[v + 1]; ++i) out.row(tets_[i]) += weights_[i] * per_vertex.row(v);
  }
  return out;
}

namespace {

bool inside_at(const TriMesh& mesh, Vec3 p, const TriMesh::ClosestHit& hit) {
  if (hit.distance < 1e-10) p += kSurfacePerturbation * mesh.face_normal(hit.face);
  return mesh.winding_number(p) > kWindingThreshold;
}

std::uint32_t find_root(std::vector<std::uint32_t>& parent, std::uint32_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

std::vector<double> compute_occupancy(const TriMesh& mesh, const TetGrid& grid) {
  const std::size_t K = grid.num_tets();
  std::vector<double> occ(K, 0.0);
  if (mesh.empty()) return occ;
  std::vector<TriMesh::ClosestHit> hits(K);
  parallel_for(K, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) hits[k] = mesh.closest_point(grid.centroids[k]);
  });

  if (!mesh.is_watertight()) {
    warn("mesh is not watertight; occupancy uses the generalized winding number");
    parallel_for(K, [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k) occ[k] = inside_at(mesh, grid.centroids[k], hits[k]) ? 1.0 : 0.0;
    }, 64);
    return occ;
  }

  // The winding number of a closed surface is constant off the surface, so two
  // neighbouring centroids joined inside a surface-free ball share occupancy.
  constexpr double kBallSafety = 0.999;
  std::vector<std::uint32_t> parent(K);
  for (std::uint32_t k = 0; k < K; ++k) parent[k] = k;
  for (std::uint32_t k = 0; k < K; ++k) {
    for (const auto j : grid.neighbors[k]) {
      if (j == kNoNeighbor || static_cast<std::uint32_t>(j) < k) continue;
      const double gap = (grid.centroids[k] - grid.centroids[j]).norm();
      if (gap < kBallSafety * std::max(hits[k].distance, hits[j].distance)) {
        const auto a = find_root(parent, k);
        const auto b = find_root(parent, static_cast<std::uint32_t>(j));
        parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::vector<std::uint32_t> roots;
  for (std::uint32_t k = 0; k < K; ++k) {
    if (find_root(parent, k) == k) roots.push_back(k);
  }
  std::vector<double> root_occ(K, 0.0);
  parallel_for(roots.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = roots[i];
      root_occ[r] = inside_at(mesh, grid.centroids[r], hits[r]) ? 1.0 : 0.0;
    }
  }, 64);
  for (std::uint32_t k = 0; k < K; ++k) occ[k] = root_occ[find_root(parent, k)];
  return occ;
}

std::vector<Vec3> compute_tet_deformation(const TriMesh& mesh, const TetGrid& grid) {
  require(!mesh.empty(), ErrorCode::empty_input, "deformation needs a non-empty mesh");
  std::vector<Vec3> def(grid.num_tets());
  parallel_for(grid.num_tets(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) def[k] = mesh.closest_point(grid.centroids[k]).point - grid.centroids[k];
  });
  return def;
}

std::vector<Vec3> tet_to_vertex_deformation(const VertexAveraging& averaging, std::span<const Vec3> tet_deformation) {
  return averaging.apply(tet_deformation);
}

FieldSet encode_shape(const TriMesh& mesh, const GridHierarchy& hierarchy, const VertexAveraging& averaging) {
  const TetGrid& grid = hierarchy.finest();
  FieldSet f;
  f.base_cubes = grid.base_cubes;
  f.level = grid.level;
  f.occupancy = compute_occupancy(mesh, grid);
  f.tet_deformation = compute_tet_deformation(mesh, grid);
  f.vertex_deformation = tet_to_vertex_deformation(averaging, f.tet_deformation);
  return f;
}

FieldSet encode_shape(const TriMesh& mesh, const GridHierarchy& hierarchy) {
  return encode_shape(mesh, hierarchy, VertexAveraging(hierarchy.finest(), hierarchy.finest_incidence()));
}

void save_fields(const FieldSet& fields, const std::string& path, OccupancyEncoding encoding) {
  require(fields.tet_deformation.size() == fields.num_tets(), ErrorCode::shape_mismatch, "tet deformation length");
  detail::BinaryWriter w(path);
  w.magic("TFLD");
  w.put<std::uint32_t>(kFieldVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fields.base_cubes));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fields.level));
  w.put<std::uint64_t>(fields.num_tets());
  w.put<std::uint64_t>(fields.num_vertices());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(encoding));
  if (encoding == OccupancyEncoding::bits) {
    std::vector<std::uint8_t> packed((fields.num_tets() + 7) / 8, 0);
    for (std::size_t k = 0; k < fields.num_tets(); ++k) {
      if (fields.occupancy[k] > 0.5) packed[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
    }
    w.put_array(packed.data(), packed.size());
  } else {
    std::vector<float> probs(fields.occupancy.begin(), fields.occupancy.end());
    w.put_array(probs.data(), probs.size());
  }
  auto put_vectors = [&](const std::vector<Vec3>& vs) {
    std::vector<float> flat;
    flat.reserve(vs.size() * 3);
    for (const auto& v : vs) flat.insert(flat.end(), {static_cast<float>(v.x()), static_cast<float>(v.y()), static_cast<float>(v.z())});
    w.put_array(flat.data(), flat.size());
  };
  put_vectors(fields.tet_deformation);
  put_vectors(fields.vertex_deformation);
  w.finish();
}

FieldSet load_fields(const std::string& path) {
  detail::BinaryReader r(path);
  r.expect_magic("TFLD");
  const auto version = r.get<std::uint32_t>();
  if (version != kFieldVersion) fail(ErrorCode::version_mismatch, path + ": field format version " + std::to_string(version));
  FieldSet f;
  f.base_cubes = static_cast<int>(r.get<std::uint32_t>());
  f.level = static_cast<int>(r.get<std::uint32_t>());
  const auto K = r.get<std::uint64_t>();
  const auto V = r.get<std::uint64_t>();
  require(K < (std::uint64_t{1} << 32) && V < (std::uint64_t{1} << 32), ErrorCode::truncated_file,
          path + ": implausible counts");
  const auto encoding = r.get<std::uint32_t>();
  f.occupancy.resize(K);
  if (encoding == static_cast<std::uint32_t>(OccupancyEncoding::bits)) {
    std::vector<std::uint8_t> packed((K + 7) / 8);
    r.get_array(packed.data(), packed.size());
    for (std::size_t k = 0; k < K; ++k) f.occupancy[k] = (packed[k / 8] >> (k % 8)) & 1u ? 1.0 : 0.0;
  } else if (encoding == static_cast<std::uint32_t>(OccupancyEncoding::probabilities)) {
    std::vector<float> probs(K);
    r.get_array(probs.data(), K);
    std::copy(probs.begin(), probs.end(), f.occupancy.begin());
  } else {
    fail(ErrorCode::version_mismatch, path + ": unknown occupancy encoding");
  }
  auto get_vectors = [&](std::vector<Vec3>& vs, std::size_t n) {
    std::vector<float> flat(n * 3);
    r.get_array(flat.data(), flat.size());
    vs.resize(n);
    for (std::size_t i = 0; i < n; ++i) vs[i] = Vec3(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
  };
  get_vectors(f.tet_deformation, K);
  get_vectors(f.vertex_deformation, V);
  return f;
}

}  // namespace tetfield
