#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "tetfield/evalkit.hpp"
#include "tetfield/meshio.hpp"
#include "tetfield/surfacex.hpp"

namespace tetfield {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tetfield_sx_" + name)).string();
}

// Shared m=5, N=3 encodings of a sphere and a torus.
class Surfaces : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    h_ = new GridHierarchy(build_hierarchy(5, 3));
    ShapeSpec s;
    s.radius = 0.35;
    s.density = 48;
    sphere_mesh_ = new TriMesh(generate(s));
    sphere_ = new FieldSet(encode_shape(*sphere_mesh_, *h_));
    ShapeSpec t;
    t.kind = ShapeKind::torus;
    t.major_radius = 0.28;
    t.minor_radius = 0.12;
    t.rotation = Vec3(0.3, 0.4, 0.0);
    t.density = 48;
    torus_ = new FieldSet(encode_shape(generate(t), *h_));
  }
  static void TearDownTestSuite() {
    delete h_;
    delete sphere_mesh_;
    delete sphere_;
    delete torus_;
  }
  static const TetGrid& grid() { return h_->finest(); }

  static GridHierarchy* h_;
  static TriMesh* sphere_mesh_;
  static FieldSet* sphere_;
  static FieldSet* torus_;
};
GridHierarchy* Surfaces::h_ = nullptr;
TriMesh* Surfaces::sphere_mesh_ = nullptr;
FieldSet* Surfaces::sphere_ = nullptr;
FieldSet* Surfaces::torus_ = nullptr;

TEST(Threshold, StrictAndMonotone) {
  const std::vector<double> p{0.9, 0.5, 0.1, 0.500001, 0.0, 1.0};
  EXPECT_EQ(threshold_occupancy(p, 0.5), (Occupancy{1, 0, 0, 1, 0, 1}));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  std::vector<double> q(500);
  for (auto& x : q) x = u(rng);
  Occupancy prev = threshold_occupancy(q, 0.0);
  for (double tau = 0.05; tau <= 1.0; tau += 0.05) {
    const Occupancy cur = threshold_occupancy(q, tau);
    for (std::size_t k = 0; k < q.size(); ++k) EXPECT_LE(cur[k], prev[k]);
    prev = cur;
  }
}

TEST(Extract, SingleTetHasFourOutwardFaces) {
  const TetGrid g = build_base_grid(2);
  Occupancy occ(g.num_tets(), 0);
  occ[7] = 1;
  const ExtractedSurface s = extract_surface(g, occ);
  ASSERT_EQ(s.faces.size(), 4u);
  EXPECT_EQ(s.vertices.size(), 4u);
  const Vec3 c = g.centroids[7];
  for (const auto& f : s.faces) {
    const Vec3 n = (s.vertices[f[1]] - s.vertices[f[0]]).cross(s.vertices[f[2]] - s.vertices[f[0]]);
    const Vec3 fc = (s.vertices[f[0]] + s.vertices[f[1]] + s.vertices[f[2]]) / 3.0;
    EXPECT_GT(n.dot(fc - c), 0.0);
  }
  EXPECT_TRUE(is_closed(s));
  EXPECT_EQ(euler_characteristic(s), 2);
  EXPECT_NEAR(to_trimesh(s).enclosed_volume(), g.signed_volume(7), 1e-15);
}

TEST(Extract, EmptyOccupancyGivesEmptySurface) {
  const TetGrid g = build_base_grid(2);
  const ExtractedSurface s = extract_surface(g, Occupancy(g.num_tets(), 0));
  EXPECT_TRUE(s.empty());
  EXPECT_TRUE(s.vertices.empty());
  EXPECT_THROW(extract_surface(g, Occupancy(3, 1)), Error);
}

TEST(Extract, FullGridGivesCubeBoundary) {
  for (int m : {1, 2, 3}) {
    const GridHierarchy h = build_hierarchy(m, 2);
    for (int n = 1; n <= 2; ++n) {
      const TetGrid& g = h.level(n);
      const ExtractedSurface s = extract_surface(g, Occupancy(g.num_tets(), 1));
      // census: faces used by exactly one tet
      std::map<std::array<std::uint32_t, 3>, int> count;
      for (const auto& t : g.tets) {
        for (int skip = 0; skip < 4; ++skip) {
          std::array<std::uint32_t, 3> f{};
          int j = 0;
          for (int i = 0; i < 4; ++i) {
            if (i != skip) f[static_cast<std::size_t>(j++)] = t[static_cast<std::size_t>(i)];
          }
          std::sort(f.begin(), f.end());
          ++count[f];
        }
      }
      std::size_t boundary = 0;
      for (const auto& [f, c] : count) boundary += c == 1 ? 1 : 0;
      const std::size_t cells = static_cast<std::size_t>(m) << (n - 1);
      EXPECT_EQ(s.faces.size(), boundary);
      EXPECT_EQ(s.faces.size(), 2 * 6 * cells * cells);
      EXPECT_NEAR(to_trimesh(s).surface_area(), 6.0, 1e-12);
      EXPECT_NEAR(to_trimesh(s).enclosed_volume(), 1.0, 1e-12);
      EXPECT_EQ(euler_characteristic(s), 2);
    }
  }
}

TEST(Extract, RandomOccupancyFacesSeparateAndClose) {
  const GridHierarchy h = build_hierarchy(2, 2);
  const TetGrid& g = h.finest();
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 5; ++trial) {
    Occupancy occ(g.num_tets());
    for (auto& o : occ) o = coin(rng) ? 1 : 0;
    const ExtractedSurface s = extract_surface(g, occ);
    EXPECT_TRUE(is_closed(s));
    // every face belongs to exactly one occupied tet whose other side is free
    std::map<std::array<std::uint32_t, 3>, std::vector<std::size_t>> owners;
    for (std::size_t k = 0; k < g.num_tets(); ++k) {
      for (int skip = 0; skip < 4; ++skip) {
        auto f = g.outward_face(k, skip);
        std::sort(f.begin(), f.end());
        owners[f].push_back(k);
      }
    }
    for (const auto& f : s.faces) {
      std::array<std::uint32_t, 3> key{s.vertex_map[f[0]], s.vertex_map[f[1]], s.vertex_map[f[2]]};
      std::sort(key.begin(), key.end());
      const auto& o = owners.at(key);
      int occupied_sides = 0;
      for (auto k : o) occupied_sides += occ[k];
      EXPECT_EQ(occupied_sides, 1);
    }
    EXPECT_EQ(to_trimesh(s).enclosed_volume() > 0.0, std::count(occ.begin(), occ.end(), 1) > 0);
    const ExtractedSurface again = extract_surface(g, occ);
    EXPECT_EQ(again.faces, s.faces);
    EXPECT_EQ(again.vertex_map, s.vertex_map);
  }
}

TEST_F(Surfaces, GenusBeforeAndAfterSmoothing) {
  for (auto [f, chi] : {std::pair{sphere_, 2L}, std::pair{torus_, 0L}}) {
    ExtractOptions o;
    o.smooth_iters = 0;
    const Extraction raw = extract_fields(grid(), *f, o);
    EXPECT_TRUE(is_closed(raw.surface));
    EXPECT_EQ(euler_characteristic(raw.surface), chi);
    o.smooth_iters = 3;
    const Extraction smooth = extract_fields(grid(), *f, o);
    EXPECT_EQ(smooth.surface.faces, raw.surface.faces);
    EXPECT_EQ(euler_characteristic(smooth.surface), chi);
  }
}

TEST_F(Surfaces, DeformationImprovesChamfer) {
  const Occupancy occ = threshold_occupancy(sphere_->occupancy);
  const ExtractedSurface s = extract_surface(grid(), occ, sphere_->vertex_deformation);
  const ExtractedSurface d = apply_deformation(s);
  const double before = chamfer(to_trimesh(s), *sphere_mesh_, 5000, 3);
  const double after = chamfer(to_trimesh(d), *sphere_mesh_, 5000, 3);
  EXPECT_LT(after, before);
  EXPECT_LT(after, 0.1 * before);
}

TEST(Deform, ZeroAndConstant) {
  const TetGrid g = build_base_grid(2);
  Occupancy occ(g.num_tets(), 0);
  for (std::size_t k = 0; k < 12; ++k) occ[k] = 1;
  std::vector<Vec3> zero(g.num_vertices(), Vec3::Zero());
  const ExtractedSurface s0 = extract_surface(g, occ, zero);
  EXPECT_EQ(apply_deformation(s0).vertices, s0.vertices);
  const Vec3 u(0.01, -0.02, 0.03);
  const ExtractedSurface s1 = extract_surface(g, occ, std::vector<Vec3>(g.num_vertices(), u));
  const ExtractedSurface t = apply_deformation(s1);
  ASSERT_EQ(t.faces, s1.faces);
  for (std::size_t v = 0; v < t.vertices.size(); ++v) EXPECT_TRUE(t.vertices[v].isApprox(s1.vertices[v] + u, 1e-15));
  EXPECT_THROW(apply_deformation(extract_surface(g, occ)), Error);
}

std::vector<Vec3> naive_umbrella(const ExtractedSurface& s, double beta) {
  std::vector<std::set<std::uint32_t>> nb(s.vertices.size());
  for (const auto& f : s.faces) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != j) nb[f[i]].insert(f[j]);
      }
    }
  }
  std::vector<Vec3> out(s.vertices.size());
  for (std::size_t i = 0; i < s.vertices.size(); ++i) {
    Vec3 mean = Vec3::Zero();
    for (auto j : nb[i]) mean += s.vertices[j];
    mean /= static_cast<double>(nb[i].size());
    out[i] = beta * s.vertices[i] + (1.0 - beta) * mean;
  }
  return out;
}

TEST_F(Surfaces, SmoothingIdentityAndUmbrella) {
  const Occupancy occ = threshold_occupancy(sphere_->occupancy);
  ExtractedSurface s = apply_deformation(extract_surface(grid(), occ, sphere_->vertex_deformation));
  EXPECT_EQ(weighted_laplacian_smooth(s, 1.0, 5).vertices, s.vertices);
  EXPECT_THROW(weighted_laplacian_smooth(s, 1.5), Error);
  EXPECT_THROW(weighted_laplacian_smooth(s, -0.1), Error);

  ExtractedSurface parallel = s;
  for (std::size_t v = 0; v < parallel.deformation.size(); ++v) {
    parallel.deformation[v] = (v % 2 ? 1.0 : -2.0) * Vec3(0.3, 0.1, -0.2);
  }
  ExtractedSurface zero = s;
  for (auto& d : zero.deformation) d.setZero();
  for (double beta : {0.0, 0.5}) {
    const auto expected = naive_umbrella(s, beta);
    for (const auto* src : {&parallel, &zero}) {
      const auto got = weighted_laplacian_smooth(*src, beta).vertices;
      for (std::size_t v = 0; v < got.size(); ++v) ASSERT_LT((got[v] - expected[v]).norm(), 1e-14) << v;
    }
  }
}

TEST_F(Surfaces, SmoothingWeightsFollowCosine) {
  // Path-like star: centre 0 with neighbours 1..3 via a fan of faces.
  ExtractedSurface s;
  s.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(-1, -1, 0)};
  s.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}};
  s.vertex_map = {0, 1, 2, 3};
  s.deformation = {Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 0), Vec3(-1, 1, 0)};
  const auto out = weighted_laplacian_smooth(s, 0.25).vertices;
  // |cos| = 1, 0, 1/sqrt(2)
  const double w3 = 1.0 / std::sqrt(2.0);
  const Vec3 avg = (1.0 * s.vertices[1] + 0.0 * s.vertices[2] + w3 * s.vertices[3]) / (1.0 + w3);
  EXPECT_LT((out[0] - (0.25 * s.vertices[0] + 0.75 * avg)).norm(), 1e-15);
}

TEST_F(Surfaces, SmoothingLowersEnergyOnJaggedSphere) {
  const Occupancy occ = threshold_occupancy(sphere_->occupancy);
  const ExtractedSurface jagged = extract_surface(grid(), occ, sphere_->vertex_deformation);
  const ExtractedSurface smooth = weighted_laplacian_smooth(jagged, 0.5);
  EXPECT_LT(laplacian_energy(smooth), laplacian_energy(jagged));
  const ExtractedSurface deformed = apply_deformation(jagged);
  EXPECT_LT(laplacian_energy(weighted_laplacian_smooth(deformed, 0.5)), laplacian_energy(deformed));
}

TEST_F(Surfaces, FilterRemovesOnlySurfaceOutliers) {
  const Occupancy occ = threshold_occupancy(sphere_->occupancy);
  const double mu = compute_mu({*sphere_}, grid());
  EXPECT_GT(mu, 0.0);
  EXPECT_LE(mu, 0.5 / 20.0);
  EXPECT_EQ(deformation_filter(grid(), occ, sphere_->tet_deformation, 1e6), occ);

  const auto surf = surface_tets(grid(), occ);
  std::vector<Vec3> def = sphere_->tet_deformation;
  std::size_t outlier = 0, interior = 0;
  for (std::size_t k = 0; k < occ.size(); ++k) {
    if (surf[k] && !outlier) outlier = k;
    if (occ[k] && !surf[k] && !interior) interior = k;
  }
  ASSERT_GT(outlier, 0u);
  ASSERT_GT(interior, 0u);
  const double gamma = 4.0;
  const double limit = gamma * mu;
  // keep everything else under the limit
  for (auto& d : def) {
    if (d.norm() > limit) d *= 0.5 * limit / d.norm();
  }
  def[outlier] = Vec3(10.0 * limit, 0, 0);
  def[interior] = Vec3(0, 100.0 * limit, 0);
  const Occupancy out = deformation_filter(grid(), occ, def, mu, gamma);
  for (std::size_t k = 0; k < occ.size(); ++k) EXPECT_EQ(out[k], k == outlier ? 0 : occ[k]) << k;

  // one pass only: flag everything on the surface and check the newly exposed layer survives
  std::vector<Vec3> all(def.size(), Vec3(1, 0, 0));
  const Occupancy peeled = deformation_filter(grid(), occ, all, 0.01, gamma);
  for (std::size_t k = 0; k < occ.size(); ++k) EXPECT_EQ(peeled[k], surf[k] ? 0 : occ[k]);
  EXPECT_THROW(deformation_filter(grid(), occ, def, 0.0), Error);
  EXPECT_THROW(deformation_filter(grid(), occ, def, -1.0), Error);
}

TEST(ComputeMu, AveragesPerShapeMeans) {
  const TetGrid g = build_hierarchy(2, 2).finest();
  FieldSet a;
  a.occupancy.assign(g.num_tets(), 0.0);
  a.tet_deformation.assign(g.num_tets(), Vec3::Zero());
  for (std::size_t k = 0; k < 40; ++k) {
    a.occupancy[k] = 1.0;
    a.tet_deformation[k] = Vec3(0, 0.02, 0);
  }
  EXPECT_DOUBLE_EQ(compute_mu({a}, g), 0.02);
  FieldSet b = a;
  for (auto& d : b.tet_deformation) d = Vec3(0.06, 0, 0);
  EXPECT_DOUBLE_EQ(compute_mu({a, b}, g), 0.04);

  FieldSet empty = a;
  std::fill(empty.occupancy.begin(), empty.occupancy.end(), 0.0);
  std::vector<std::string> warnings;
  set_warning_sink([&](const std::string& w) { warnings.push_back(w); });
  EXPECT_DOUBLE_EQ(compute_mu({a, empty, b}, g), 0.04);
  EXPECT_THROW(compute_mu({empty}, g), Error);
  set_warning_sink(nullptr);
  EXPECT_EQ(warnings.size(), 2u);
  EXPECT_THROW(compute_mu({}, g), Error);
}

TEST_F(Surfaces, TetExportHasSolidInteriorAndPositiveVolumes) {
  const Extraction e = extract_fields(grid(), *sphere_, ExtractOptions{});
  const TetMesh t = build_tet_mesh(grid(), e.occupancy, e.surface);
  EXPECT_EQ(t.tets.size(), static_cast<std::size_t>(std::count(e.occupancy.begin(), e.occupancy.end(), 1)));
  EXPECT_GT(t.interior_tets, 0u);
  EXPECT_GT(t.min_volume, 0.0);
  for (const auto& ext : {std::string(".vtk"), std::string(".mesh")}) {
    const std::string path = temp_path("sphere" + ext);
    export_tet_mesh(t, path);
    const RawTets r = ext == ".vtk" ? read_vtk_tets(path) : read_medit_tets(path);
    EXPECT_EQ(r.tets.size(), t.tets.size());
    EXPECT_EQ(r.vertices.size(), t.vertices.size());
    for (const auto& tet : r.tets) {
      EXPECT_GT(signed_tet_volume(r.vertices[tet[0]], r.vertices[tet[1]], r.vertices[tet[2]], r.vertices[tet[3]]), 0.0);
    }
    std::filesystem::remove(path);
  }
  const std::string obj = temp_path("sphere.obj");
  export_surface_obj(e.surface, obj);
  const RawTriangles tri = read_obj(obj);
  EXPECT_EQ(tri.faces.size(), e.surface.faces.size());
  std::filesystem::remove(obj);
}

TEST_F(Surfaces, TetExportPullsBackInvertedTets) {
  const Occupancy occ = threshold_occupancy(sphere_->occupancy);
  ExtractedSurface s = extract_surface(grid(), occ, sphere_->vertex_deformation);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.08);
  for (auto& d : s.deformation) d = Vec3(n(rng), n(rng), n(rng));
  const TetMesh t = build_tet_mesh(grid(), occ, apply_deformation(s));
  EXPECT_GT(t.pulled_back, 0u);
  EXPECT_GT(t.min_volume, 0.0);
  // interior vertices stay on the grid
  std::set<std::uint32_t> surface_ids(s.vertex_map.begin(), s.vertex_map.end());
  std::size_t on_grid = 0;
  for (std::size_t k = 0; k < grid().num_tets(); ++k) {
    if (!occ[k]) continue;
    for (auto g : grid().tets[k]) on_grid += surface_ids.count(g) ? 0 : 1;
  }
  EXPECT_GT(on_grid, 0u);
}

TEST(TetExport, EmptyOccupancyWritesValidHeader) {
  const TetGrid g = build_base_grid(2);
  const Occupancy occ(g.num_tets(), 0);
  const TetMesh t = build_tet_mesh(g, occ, extract_surface(g, occ));
  EXPECT_TRUE(t.tets.empty());
  for (const auto& ext : {std::string(".vtk"), std::string(".mesh")}) {
    const std::string path = temp_path("empty" + ext);
    export_tet_mesh(t, path);
    const RawTets r = ext == ".vtk" ? read_vtk_tets(path) : read_medit_tets(path);
    EXPECT_TRUE(r.tets.empty());
    std::filesystem::remove(path);
  }
}

}  // namespace
}  // namespace tetfield
