#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "tetfield/meshio.hpp"
#include "tetfield/tetgrid.hpp"

namespace tetfield {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tetfield_" + name)).string();
}

// O(K^2) adjacency: two tets are neighbors iff they share exactly 3 vertices.
std::vector<std::set<std::int64_t>> brute_force_adjacency(const TetGrid& g) {
  std::vector<std::set<std::int64_t>> adj(g.num_tets());
  for (std::size_t a = 0; a < g.num_tets(); ++a) {
    for (std::size_t b = a + 1; b < g.num_tets(); ++b) {
      int shared = 0;
      for (auto u : g.tets[a]) {
        for (auto v : g.tets[b]) shared += (u == v);
      }
      if (shared == 3) {
        adj[a].insert(static_cast<std::int64_t>(b));
        adj[b].insert(static_cast<std::int64_t>(a));
      }
    }
  }
  return adj;
}

std::set<std::int64_t> table_neighbors(const TetGrid& g, std::size_t k) {
  std::set<std::int64_t> s;
  for (auto n : g.neighbors[k]) {
    if (n != kNoNeighbor) s.insert(n);
  }
  return s;
}

TetGrid single_tet() {
  TetGrid g;
  g.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  g.tets = {{0, 1, 2, 3}};
  g.rebuild_derived();
  return g;
}

TEST(BaseGrid, SingleCubeHasSixTetsAndUnitVolume) {
  const TetGrid g = build_base_grid(1);
  EXPECT_EQ(g.num_tets(), 6u);
  EXPECT_EQ(g.num_vertices(), 8u);
  const auto report = validate(g);
  EXPECT_TRUE(report.all_pass());
  EXPECT_NEAR(report.total_volume, 1.0, 1e-12);
}

TEST(BaseGrid, SingleCubeTetsAllTouchBoundary) {
  const TetGrid g = build_base_grid(1);
  const auto adj = brute_force_adjacency(g);
  for (std::size_t k = 0; k < g.num_tets(); ++k) {
    EXPECT_LE(adj[k].size(), 3u);
    EXPECT_EQ(adj[k], table_neighbors(g, k));
  }
}

TEST(BaseGrid, FiveCubesValidates) {
  const TetGrid g = build_base_grid(5);
  EXPECT_EQ(g.num_tets(), 750u);
  const auto report = validate(g);
  EXPECT_TRUE(report.all_pass()) << (report.messages.empty() ? "" : report.messages.front());
}

TEST(BaseGrid, RejectsZeroCubes) {
  try {
    build_base_grid(0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_parameter);
  }
}

TEST(BaseGrid, NeighborTableMatchesBruteForce) {
  for (const TetGrid& g : {build_base_grid(2), subdivide(build_base_grid(2)).grid}) {
    const auto adj = brute_force_adjacency(g);
    for (std::size_t k = 0; k < g.num_tets(); ++k) ASSERT_EQ(adj[k], table_neighbors(g, k)) << k;
  }
}

TEST(BaseGrid, BackSlotsPointBack) {
  const TetGrid g = subdivide(build_base_grid(2)).grid;
  for (std::size_t k = 0; k < g.num_tets(); ++k) {
    for (int s = 0; s < 4; ++s) {
      const auto n = g.neighbors[k][s];
      if (n == kNoNeighbor) {
        EXPECT_EQ(g.back_slot[k][s], -1);
      } else {
        EXPECT_EQ(g.neighbors[static_cast<std::size_t>(n)][g.back_slot[k][s]], static_cast<std::int64_t>(k));
      }
    }
  }
}

TEST(BaseGrid, NeighborSlotIsOppositeFace) {
  const TetGrid g = build_base_grid(3);
  for (std::size_t k = 0; k < g.num_tets(); ++k) {
    for (int s = 0; s < 4; ++s) {
      const auto n = g.neighbors[k][s];
      if (n == kNoNeighbor) continue;
      const auto& other = g.tets[static_cast<std::size_t>(n)];
      EXPECT_EQ(std::count(other.begin(), other.end(), g.tets[k][s]), 0);
    }
  }
}

TEST(Subdivide, SingleTetGivesEightChildrenTenVertices) {
  const auto sub = subdivide(single_tet());
  EXPECT_EQ(sub.grid.num_tets(), 8u);
  EXPECT_EQ(sub.grid.num_vertices(), 10u);
  double total = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_GT(sub.grid.signed_volume(k), 0.0);
    total += sub.grid.signed_volume(k);
  }
  EXPECT_NEAR(total, 1.0 / 6.0, 1e-15);
}

TEST(Subdivide, ConservesVolumeAndCountsOnCube) {
  const auto sub = subdivide(build_base_grid(1));
  EXPECT_EQ(sub.grid.num_tets(), 48u);
  const auto report = validate(sub.grid);
  EXPECT_TRUE(report.all_pass());
  EXPECT_NEAR(report.total_volume, 1.0, 1e-12);
}

TEST(Subdivide, ChildMapIsBijection) {
  const TetGrid base = build_base_grid(2);
  const auto sub = subdivide(base);
  std::vector<int> seen(sub.grid.num_tets(), 0);
  for (const auto& row : sub.child_map) {
    std::set<std::uint32_t> distinct(row.begin(), row.end());
    EXPECT_EQ(distinct.size(), 8u);
    for (auto c : row) ++seen[c];
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST(Subdivide, ChildrenPartitionParentAndSitInside) {
  const TetGrid base = build_base_grid(2);
  const auto sub = subdivide(base);
  for (std::size_t k = 0; k < base.num_tets(); ++k) {
    double vol = 0.0;
    const auto& t = base.tets[k];
    const Vec3& a = base.vertices[t[0]];
    for (auto c : sub.child_map[k]) {
      vol += sub.grid.signed_volume(c);
      // Barycentric coordinates of the child centroid must all be positive.
      Eigen::Matrix3d M;
      M.col(0) = base.vertices[t[1]] - a;
      M.col(1) = base.vertices[t[2]] - a;
      M.col(2) = base.vertices[t[3]] - a;
      const Vec3 l = M.inverse() * (sub.grid.centroids[c] - a);
      EXPECT_GT(l.minCoeff(), 0.0);
      EXPECT_GT(1.0 - l.sum(), 0.0);
    }
    EXPECT_NEAR(vol, base.signed_volume(k), 1e-12);
  }
}

TEST(Subdivide, ShapeQualityDoesNotDegrade) {
  const auto h = build_hierarchy(1, 4);
  const double level1 = min_dihedral_angle(h.level(1));
  for (int n = 2; n <= 4; ++n) EXPECT_GE(min_dihedral_angle(h.level(n)), level1 - 1e-9) << "level " << n;
}

TEST(Hierarchy, CountsFollowGeometricGrowth) {
  const auto h = build_hierarchy(2, 3);
  ASSERT_EQ(h.levels(), 3);
  EXPECT_EQ(h.level(1).num_tets(), 48u);
  EXPECT_EQ(h.level(2).num_tets(), 384u);
  EXPECT_EQ(h.level(3).num_tets(), 3072u);
  for (int n = 1; n <= 3; ++n) EXPECT_TRUE(validate(h.level(n)).all_pass());
  for (std::size_t k = 0; k < h.level(2).num_tets(); ++k) {
    const auto parent = h.parent_map[0][k];
    const auto& kids = h.children(1, parent);
    EXPECT_NE(std::find(kids.begin(), kids.end(), static_cast<std::uint32_t>(k)), kids.end());
  }
}

TEST(Hierarchy, SingleLevel) {
  const auto h = build_hierarchy(1, 1);
  EXPECT_EQ(h.levels(), 1);
  EXPECT_EQ(h.finest().num_tets(), 6u);
  EXPECT_TRUE(h.child_map.empty());
}

TEST(Hierarchy, PaperScaleFinestCount) {
  const auto h = build_hierarchy(5, 4);
  EXPECT_EQ(h.finest().num_tets(), 384000u);
}

TEST(Hierarchy, ResourceCap) {
  try {
    build_hierarchy(5, 4, 1000);
    FAIL() << "expected resource-limit";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::resource_limit);
  }
}

TEST(Hierarchy, IncidenceListsMatchTets) {
  const auto h = build_hierarchy(2, 2);
  const auto& g = h.finest();
  const auto& inc = h.finest_incidence();
  std::size_t total = 0;
  for (std::size_t v = 0; v < g.num_vertices(); ++v) {
    ASSERT_FALSE(inc.of(v).empty());
    for (auto k : inc.of(v)) {
      const auto& t = g.tets[k];
      EXPECT_NE(std::find(t.begin(), t.end(), static_cast<std::uint32_t>(v)), t.end());
    }
    total += inc.of(v).size();
  }
  EXPECT_EQ(total, 4 * g.num_tets());
}

TEST(Hierarchy, Deterministic) {
  const auto a = build_hierarchy(3, 2);
  const auto b = build_hierarchy(3, 2);
  EXPECT_TRUE(a.finest() == b.finest());
  EXPECT_EQ(a.finest().centroids, b.finest().centroids);
}

TEST(Validate, FlagsCorruptedNeighbor) {
  TetGrid g = build_base_grid(3);
  for (int s = 0; s < 4; ++s) {
    if (g.neighbors[40][s] != kNoNeighbor) {
      g.neighbors[40][s] = 0;
      break;
    }
  }
  const auto report = validate(g);
  EXPECT_FALSE(report.adjacency_symmetric);
  EXPECT_FALSE(report.all_pass());
}

TEST(Validate, FlagsSwappedVertices) {
  TetGrid g = build_base_grid(3);
  std::swap(g.tets[7][0], g.tets[7][1]);
  const auto report = validate(g);
  EXPECT_FALSE(report.positive_volumes);
  EXPECT_EQ(report.nonpositive_tets, 1u);
}

TEST(Validate, FlagsMissingTet) {
  TetGrid g = build_base_grid(2);
  g.tets.erase(g.tets.begin() + 20);
  g.rebuild_derived();
  const auto report = validate(g);
  EXPECT_FALSE(report.conforming);
  EXPECT_FALSE(report.volume_total_ok);
}

TEST(GridIO, RoundTripSmall) {
  const TetGrid g = build_base_grid(1);
  const auto path = temp_path("rt1.bin");
  save_grid(g, path);
  const TetGrid back = load_grid(path);
  EXPECT_TRUE(back == g);
  EXPECT_EQ(back.centroids, g.centroids);
  std::filesystem::remove(path);
}

TEST(GridIO, RoundTripRefined) {
  const auto h = build_hierarchy(5, 2);
  const auto path = temp_path("rt2.bin");
  save_grid(h.finest(), path);
  const TetGrid back = load_grid(path);
  EXPECT_TRUE(back == h.finest());
  const auto rebuilt = load_hierarchy(path);
  EXPECT_EQ(rebuilt.levels(), 2);
  std::filesystem::remove(path);
}

TEST(GridIO, CorruptMagicIsVersionMismatch) {
  const auto path = temp_path("bad.bin");
  save_grid(build_base_grid(1), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  try {
    load_grid(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::version_mismatch);
  }
  std::filesystem::remove(path);
}

TEST(GridIO, TruncatedFile) {
  const auto path = temp_path("trunc.bin");
  save_grid(build_base_grid(2), path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  try {
    load_grid(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::truncated_file);
  }
  std::filesystem::remove(path);
}

TEST(GridIO, ExportsReadBack) {
  const TetGrid g = build_base_grid(2);
  const auto vtk = temp_path("g.vtk");
  const auto medit = temp_path("g.mesh");
  export_grid_vtk(g, vtk);
  export_grid_medit(g, medit);
  const auto a = read_vtk_tets(vtk);
  const auto b = read_medit_tets(medit);
  EXPECT_EQ(a.tets, g.tets);
  EXPECT_EQ(b.tets, g.tets);
  EXPECT_EQ(a.vertices.size(), g.num_vertices());
  std::filesystem::remove(vtk);
  std::filesystem::remove(medit);
}

}  // namespace
}  // namespace tetfield
