#include "tetfield/tetgrid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "binary_io.hpp"
#include "tetfield/meshio.hpp"

namespace tetfield {

namespace {

constexpr std::uint32_t kGridVersion = 1;

using FaceKey = std::array<std::uint32_t, 3>;

struct FaceRecord {
  FaceKey key;
  std::uint32_t tet;
  std::int8_t slot;
};

FaceKey sorted_face(const TetIndices& t, int opposite) {
  FaceKey f{};
  int j = 0;
  for (int i = 0; i < 4; ++i) {
    if (i != opposite) f[j++] = t[i];
  }
  std::sort(f.begin(), f.end());
  return f;
}

std::vector<FaceRecord> face_census(const std::vector<TetIndices>& tets) {
  std::vector<FaceRecord> faces;
  faces.reserve(tets.size() * 4);
  for (std::size_t k = 0; k < tets.size(); ++k) {
    for (int s = 0; s < 4; ++s) {
      faces.push_back({sorted_face(tets[k], s), static_cast<std::uint32_t>(k), static_cast<std::int8_t>(s)});
    }
  }
  std::sort(faces.begin(), faces.end(), [](const FaceRecord& a, const FaceRecord& b) {
    if (a.key != b.key) return a.key < b.key;
    if (a.tet != b.tet) return a.tet < b.tet;
    return a.slot < b.slot;
  });
  return faces;
}

void compute_centroids_and_back_slots(TetGrid& g) {
  g.centroids.resize(g.tets.size());
  for (std::size_t k = 0; k < g.tets.size(); ++k) {
    const auto& t = g.tets[k];
    g.centroids[k] = 0.25 * (g.vertices[t[0]] + g.vertices[t[1]] + g.vertices[t[2]] + g.vertices[t[3]]);
  }
  g.back_slot.assign(g.tets.size(), {-1, -1, -1, -1});
  const auto K = static_cast<std::int64_t>(g.tets.size());
  for (std::size_t k = 0; k < g.tets.size(); ++k) {
    for (int s = 0; s < 4; ++s) {
      const std::int64_t n = g.neighbors[k][s];
      if (n < 0 || n >= K) continue;
      for (int r = 0; r < 4; ++r) {
        if (g.neighbors[static_cast<std::size_t>(n)][r] == static_cast<std::int64_t>(k)) {
          g.back_slot[k][s] = static_cast<std::int8_t>(r);
          break;
        }
      }
    }
  }
}

// Canonical order from a Bey/Kuhn path order (y0, y1, y2, y3): (y0, y2, y1, y3),
// with the first pair swapped when needed for positive orientation. Swapping
// inside a pair leaves the octahedron diagonal and all descendants unchanged.
TetIndices canonical_from_path(const std::vector<Vec3>& verts, std::uint32_t y0, std::uint32_t y1,
                               std::uint32_t y2, std::uint32_t y3) {
  TetIndices t{y0, y2, y1, y3};
  if (signed_tet_volume(verts[t[0]], verts[t[1]], verts[t[2]], verts[t[3]]) < 0.0) std::swap(t[0], t[1]);
  return t;
}

bool on_cube_boundary(const TetGrid& g, const FaceKey& f) {
  for (int axis = 0; axis < 3; ++axis) {
    for (double wall : {0.0, 1.0}) {
      if (g.vertices[f[0]][axis] == wall && g.vertices[f[1]][axis] == wall && g.vertices[f[2]][axis] == wall) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

double TetGrid::signed_volume(std::size_t k) const {
  const auto& t = tets[k];
  return signed_tet_volume(vertices[t[0]], vertices[t[1]], vertices[t[2]], vertices[t[3]]);
}

std::array<std::uint32_t, 3> TetGrid::outward_face(std::size_t k, int s) const {
  const auto& t = tets[k];
  switch (s) {
    case 0: return {t[1], t[2], t[3]};
    case 1: return {t[0], t[3], t[2]};
    case 2: return {t[0], t[1], t[3]};
    default: return {t[0], t[2], t[1]};
  }
}

void TetGrid::rebuild_derived() {
  neighbors.assign(tets.size(), {kNoNeighbor, kNoNeighbor, kNoNeighbor, kNoNeighbor});
  const auto faces = face_census(tets);
  for (std::size_t i = 0; i + 1 < faces.size();) {
    if (faces[i].key == faces[i + 1].key) {
      neighbors[faces[i].tet][faces[i].slot] = faces[i + 1].tet;
      neighbors[faces[i + 1].tet][faces[i + 1].slot] = faces[i].tet;
      i += 2;
    } else {
      ++i;
    }
  }
  compute_centroids_and_back_slots(*this);
}

bool TetGrid::operator==(const TetGrid& other) const {
  return level == other.level && base_cubes == other.base_cubes && vertices == other.vertices &&
         tets == other.tets && neighbors == other.neighbors;
}

TetGrid build_base_grid(int m) {
  require(m >= 1, ErrorCode::invalid_parameter, "cubes per axis must be >= 1");
  TetGrid g;
  g.level = 1;
  g.base_cubes = m;
  const int n = m + 1;
  g.vertices.reserve(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        g.vertices.emplace_back(static_cast<double>(i) / m, static_cast<double>(j) / m, static_cast<double>(k) / m);
      }
    }
  }
  auto vid = [n](int i, int j, int k) { return static_cast<std::uint32_t>(i + n * (j + n * k)); };
  static constexpr std::array<std::array<int, 3>, 6> kAxisOrders = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  g.tets.reserve(static_cast<std::size_t>(6) * m * m * m);
  for (int k = 0; k < m; ++k) {
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < m; ++i) {
        for (const auto& order : kAxisOrders) {
          std::array<int, 3> p{i, j, k};
          std::array<std::uint32_t, 4> path{};
          path[0] = vid(p[0], p[1], p[2]);
          for (int step = 0; step < 3; ++step) {
            p[order[step]] += 1;
            path[step + 1] = vid(p[0], p[1], p[2]);
          }
          g.tets.push_back(canonical_from_path(g.vertices, path[0], path[1], path[2], path[3]));
        }
      }
    }
  }
  g.rebuild_derived();
  return g;
}

Subdivision subdivide(const TetGrid& grid) {
  Subdivision out;
  TetGrid& g = out.grid;
  g.level = grid.level + 1;
  g.base_cubes = grid.base_cubes;
  g.vertices = grid.vertices;
  g.tets.reserve(grid.tets.size() * 8);
  out.child_map.resize(grid.tets.size());

  std::unordered_map<std::uint64_t, std::uint32_t> midpoint_of;
  midpoint_of.reserve(grid.tets.size() * 2);
  auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
    const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
    auto [it, inserted] = midpoint_of.try_emplace(key, static_cast<std::uint32_t>(g.vertices.size()));
    if (inserted) g.vertices.push_back(0.5 * (grid.vertices[a] + grid.vertices[b]));
    return it->second;
  };

  for (std::size_t k = 0; k < grid.tets.size(); ++k) {
    const auto& t = grid.tets[k];
    // Path order of the parent: diagonal y02-y13 is midpoint(a,b)-midpoint(c,d).
    const std::uint32_t y0 = t[0], y1 = t[2], y2 = t[1], y3 = t[3];
    const std::uint32_t y01 = midpoint(y0, y1), y02 = midpoint(y0, y2), y03 = midpoint(y0, y3);
    const std::uint32_t y12 = midpoint(y1, y2), y13 = midpoint(y1, y3), y23 = midpoint(y2, y3);
    const std::array<std::array<std::uint32_t, 4>, 8> children = {{
        {y0, y01, y02, y03},
        {y01, y1, y12, y13},
        {y02, y12, y2, y23},
        {y03, y13, y23, y3},
        {y01, y02, y03, y13},
        {y01, y02, y12, y13},
        {y02, y03, y13, y23},
        {y02, y12, y13, y23},
    }};
    for (int c = 0; c < 8; ++c) {
      out.child_map[k][c] = static_cast<std::uint32_t>(g.tets.size());
      const auto& z = children[c];
      g.tets.push_back(canonical_from_path(g.vertices, z[0], z[1], z[2], z[3]));
    }
  }
  g.rebuild_derived();
  return out;
}

VertexIncidence VertexIncidence::build(const TetGrid& grid) {
  VertexIncidence inc;
  inc.offsets.assign(grid.num_vertices() + 1, 0);
  for (const auto& t : grid.tets) {
    for (auto v : t) ++inc.offsets[v + 1];
  }
  for (std::size_t v = 0; v < grid.num_vertices(); ++v) inc.offsets[v + 1] += inc.offsets[v];
  inc.tets.resize(inc.offsets.back());
  std::vector<std::uint32_t> cursor(inc.offsets.begin(), inc.offsets.end() - 1);
  for (std::size_t k = 0; k < grid.tets.size(); ++k) {
    for (auto v : grid.tets[k]) inc.tets[cursor[v]++] = static_cast<std::uint32_t>(k);
  }
  return inc;
}

GridHierarchy build_hierarchy(int m, int levels, std::size_t max_tets) {
  require(m >= 1, ErrorCode::invalid_parameter, "cubes per axis must be >= 1");
  require(levels >= 1, ErrorCode::invalid_parameter, "levels must be >= 1");
  const double finest = 6.0 * m * m * m * std::pow(8.0, levels - 1);
  if (finest > static_cast<double>(max_tets)) {
    fail(ErrorCode::resource_limit, "finest level would have " + std::to_string(static_cast<long long>(finest)) +
                                        " tets, cap is " + std::to_string(max_tets));
  }
  GridHierarchy h;
  h.grids.push_back(build_base_grid(m));
  for (int n = 1; n < levels; ++n) {
    Subdivision sub = subdivide(h.grids.back());
    std::vector<std::uint32_t> parents(sub.grid.num_tets());
    for (std::size_t k = 0; k < sub.child_map.size(); ++k) {
      for (auto c : sub.child_map[k]) parents[c] = static_cast<std::uint32_t>(k);
    }
    h.child_map.push_back(std::move(sub.child_map));
    h.parent_map.push_back(std::move(parents));
    h.grids.push_back(std::move(sub.grid));
  }
  for (const auto& g : h.grids) h.vertex_incidence.push_back(VertexIncidence::build(g));
  return h;
}

ValidationReport validate(const TetGrid& grid) {
  ValidationReport r;
  const std::size_t K = grid.num_tets();
  const std::size_t V = grid.num_vertices();

  for (std::size_t k = 0; k < K; ++k) {
    for (auto v : grid.tets[k]) {
      if (v >= V) {
        r.conforming = false;
        r.messages.push_back("tet " + std::to_string(k) + " references missing vertex");
        return r;
      }
    }
  }
  if (grid.neighbors.size() != K) {
    r.adjacency_symmetric = false;
    r.messages.push_back("neighbor table size mismatch");
    return r;
  }

  CompensatedSum total;
  r.min_volume = K ? grid.signed_volume(0) : 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double vol = grid.signed_volume(k);
    total.add(vol);
    r.min_volume = std::min(r.min_volume, vol);
    if (!(vol > 0.0)) ++r.nonpositive_tets;
  }
  r.total_volume = total.value();
  r.positive_volumes = r.nonpositive_tets == 0;
  r.volume_total_ok = std::abs(r.total_volume - 1.0) <= 1e-12;
  if (!r.positive_volumes) r.messages.push_back(std::to_string(r.nonpositive_tets) + " tets with non-positive volume");
  if (!r.volume_total_ok) r.messages.push_back("total volume " + std::to_string(r.total_volume) + " != 1");

  for (std::size_t k = 0; k < K; ++k) {
    for (int s = 0; s < 4; ++s) {
      const std::int64_t n = grid.neighbors[k][s];
      if (n == kNoNeighbor) continue;
      bool back = false;
      if (n >= 0 && static_cast<std::size_t>(n) < K) {
        for (int t = 0; t < 4; ++t) back = back || grid.neighbors[static_cast<std::size_t>(n)][t] == static_cast<std::int64_t>(k);
      }
      if (!back) ++r.asymmetric_entries;
    }
  }
  r.adjacency_symmetric = r.asymmetric_entries == 0;
  if (!r.adjacency_symmetric) r.messages.push_back(std::to_string(r.asymmetric_entries) + " asymmetric neighbor entries");

  const auto faces = face_census(grid.tets);
  for (std::size_t i = 0; i < faces.size();) {
    std::size_t j = i;
    while (j < faces.size() && faces[j].key == faces[i].key) ++j;
    const std::size_t count = j - i;
    if (count > 2) {
      ++r.nonconforming_faces;
    } else if (count == 2) {
      const auto& a = faces[i];
      const auto& b = faces[i + 1];
      if (grid.neighbors[a.tet][a.slot] != b.tet || grid.neighbors[b.tet][b.slot] != a.tet) ++r.boundary_mismatches;
    } else {
      const auto& a = faces[i];
      if (!on_cube_boundary(grid, a.key)) {
        // An unmatched face inside the cube means a hanging vertex or a gap.
        ++r.nonconforming_faces;
      } else if (grid.neighbors[a.tet][a.slot] != kNoNeighbor) {
        ++r.boundary_mismatches;
      }
    }
    i = j;
  }
  r.conforming = r.nonconforming_faces == 0;
  r.boundary_consistent = r.boundary_mismatches == 0;
  if (!r.conforming) r.messages.push_back(std::to_string(r.nonconforming_faces) + " non-conforming faces");
  if (!r.boundary_consistent) {
    r.messages.push_back(std::to_string(r.boundary_mismatches) + " neighbor entries disagree with the face census");
  }
  return r;
}

double min_dihedral_angle(const TetGrid& grid) {
  double best = std::numbers::pi;
  static constexpr std::array<std::array<int, 4>, 6> kEdges = {
      {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}, {1, 2, 0, 3}, {1, 3, 0, 2}, {2, 3, 0, 1}}};
  for (const auto& t : grid.tets) {
    for (const auto& e : kEdges) {
      const Vec3& p = grid.vertices[t[e[0]]];
      const Vec3 axis = (grid.vertices[t[e[1]]] - p).normalized();
      Vec3 u = grid.vertices[t[e[2]]] - p;
      Vec3 w = grid.vertices[t[e[3]]] - p;
      u -= axis * axis.dot(u);
      w -= axis * axis.dot(w);
      const double c = std::clamp(u.normalized().dot(w.normalized()), -1.0, 1.0);
      best = std::min(best, std::acos(c));
    }
  }
  return best;
}

void save_grid(const TetGrid& grid, const std::string& path) {
  detail::BinaryWriter w(path);
  w.magic("TGRD");
  w.put<std::uint32_t>(kGridVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.level));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.base_cubes));
  w.put<std::uint64_t>(grid.num_vertices());
  w.put<std::uint64_t>(grid.num_tets());
  w.put_array(grid.vertices.data()->data(), grid.num_vertices() * 3);
  w.put_array(grid.tets.data()->data(), grid.num_tets() * 4);
  w.put_array(grid.neighbors.data()->data(), grid.num_tets() * 4);
  w.finish();
}

TetGrid load_grid(const std::string& path) {
  detail::BinaryReader r(path);
  r.expect_magic("TGRD");
  const auto version = r.get<std::uint32_t>();
  if (version != kGridVersion) {
    fail(ErrorCode::version_mismatch, path + ": grid format version " + std::to_string(version));
  }
  TetGrid g;
  g.level = static_cast<int>(r.get<std::uint32_t>());
  g.base_cubes = static_cast<int>(r.get<std::uint32_t>());
  const auto V = r.get<std::uint64_t>();
  const auto K = r.get<std::uint64_t>();
  require(V < (std::uint64_t{1} << 32) && K < (std::uint64_t{1} << 32), ErrorCode::truncated_file,
          path + ": implausible counts");
  g.vertices.resize(V);
  g.tets.resize(K);
  g.neighbors.resize(K);
  r.get_array(g.vertices.data()->data(), V * 3);
  r.get_array(g.tets.data()->data(), K * 4);
  r.get_array(g.neighbors.data()->data(), K * 4);
  for (const auto& t : g.tets) {
    for (auto v : t) require(v < V, ErrorCode::parse_error, path + ": vertex index out of range");
  }
  compute_centroids_and_back_slots(g);
  return g;
}

GridHierarchy load_hierarchy(const std::string& path, std::size_t max_tets) {
  const TetGrid stored = load_grid(path);
  GridHierarchy h = build_hierarchy(stored.base_cubes, stored.level, max_tets);
  require(h.finest() == stored, ErrorCode::invalid_parameter,
          path + ": grid does not match the hierarchy rebuilt from its header");
  return h;
}

void export_grid_vtk(const TetGrid& grid, const std::string& path) {
  write_vtk_tets(path, grid.vertices, grid.tets);
}

void export_grid_medit(const TetGrid& grid, const std::string& path) {
  write_medit_tets(path, grid.vertices, grid.tets);
}

}  // namespace tetfield
