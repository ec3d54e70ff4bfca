#include "tetfield/surfacex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "tetfield/meshio.hpp"

namespace tetfield {

namespace {

constexpr int kPullBackRounds = 30;

bool is_free(const TetGrid& grid, const Occupancy& occupied, std::size_t k, int s) {
  const auto nb = grid.neighbors[k][static_cast<std::size_t>(s)];
  return nb == kNoNeighbor || !occupied[static_cast<std::size_t>(nb)];
}

void check_length(const TetGrid& grid, const Occupancy& occupied) {
  require(occupied.size() == grid.num_tets(), ErrorCode::shape_mismatch,
          "occupancy has " + std::to_string(occupied.size()) + " entries, grid has " +
              std::to_string(grid.num_tets()) + " tets");
}

// Sorted, deduplicated neighbour lists over surface edges.
std::vector<std::vector<std::uint32_t>> vertex_neighbors(const ExtractedSurface& s) {
  std::vector<std::vector<std::uint32_t>> nb(s.vertices.size());
  for (const auto& f : s.faces) {
    for (int e = 0; e < 3; ++e) {
      nb[f[e]].push_back(f[(e + 1) % 3]);
      nb[f[(e + 1) % 3]].push_back(f[e]);
    }
  }
  for (auto& list : nb) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return nb;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> directed_edges(const ExtractedSurface& s) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  edges.reserve(3 * s.faces.size());
  for (const auto& f : s.faces) {
    for (int e = 0; e < 3; ++e) edges.emplace_back(f[e], f[(e + 1) % 3]);
  }
  return edges;
}

}  // namespace

Occupancy threshold_occupancy(std::span<const double> probabilities, double tau) {
  Occupancy bits(probabilities.size());
  for (std::size_t k = 0; k < probabilities.size(); ++k) bits[k] = probabilities[k] > tau ? 1 : 0;
  return bits;
}

ExtractedSurface extract_surface(const TetGrid& grid, const Occupancy& occupied, std::span<const Vec3> vertex_deformation) {
  check_length(grid, occupied);
  require(vertex_deformation.empty() || vertex_deformation.size() == grid.num_vertices(), ErrorCode::shape_mismatch,
          "vertex deformation length does not match the grid");
  std::vector<Triangle> grid_faces;
  for (std::size_t k = 0; k < grid.num_tets(); ++k) {
    if (!occupied[k]) continue;
    for (int s = 0; s < 4; ++s) {
      if (is_free(grid, occupied, k, s)) grid_faces.push_back(grid.outward_face(k, s));
    }
  }
  ExtractedSurface out;
  for (const auto& f : grid_faces) out.vertex_map.insert(out.vertex_map.end(), f.begin(), f.end());
  std::sort(out.vertex_map.begin(), out.vertex_map.end());
  out.vertex_map.erase(std::unique(out.vertex_map.begin(), out.vertex_map.end()), out.vertex_map.end());
  auto local = [&](std::uint32_t g) {
    return static_cast<std::uint32_t>(std::lower_bound(out.vertex_map.begin(), out.vertex_map.end(), g) -
                                      out.vertex_map.begin());
  };
  out.faces.reserve(grid_faces.size());
  for (const auto& f : grid_faces) out.faces.push_back({local(f[0]), local(f[1]), local(f[2])});
  for (std::uint32_t g : out.vertex_map) {
    out.vertices.push_back(grid.vertices[g]);
    if (!vertex_deformation.empty()) out.deformation.push_back(vertex_deformation[g]);
  }
  return out;
}

std::vector<std::uint8_t> surface_tets(const TetGrid& grid, const Occupancy& occupied) {
  check_length(grid, occupied);
  std::vector<std::uint8_t> surface(grid.num_tets(), 0);
  for (std::size_t k = 0; k < grid.num_tets(); ++k) {
    if (!occupied[k]) continue;
    for (int s = 0; s < 4 && !surface[k]; ++s) surface[k] = is_free(grid, occupied, k, s) ? 1 : 0;
  }
  return surface;
}

Occupancy deformation_filter(const TetGrid& grid, const Occupancy& occupied, std::span<const Vec3> tet_deformation,
                             double mu, double gamma) {
  require(mu > 0.0 && std::isfinite(mu), ErrorCode::invalid_parameter, "filter scale mu must be positive");
  require(gamma > 0.0, ErrorCode::invalid_parameter, "gamma must be positive");
  require(tet_deformation.size() == grid.num_tets(), ErrorCode::shape_mismatch,
          "tet deformation length does not match the grid");
  const auto surface = surface_tets(grid, occupied);
  Occupancy out = occupied;
  const double limit = gamma * mu;
  for (std::size_t k = 0; k < grid.num_tets(); ++k) {
    if (surface[k] && tet_deformation[k].norm() > limit) out[k] = 0;
  }
  return out;
}

double compute_mu(const std::vector<FieldSet>& data, const TetGrid& grid) {
  require(!data.empty(), ErrorCode::empty_input, "compute_mu needs at least one shape");
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const FieldSet& f = data[i];
    require(f.num_tets() == grid.num_tets() && f.tet_deformation.size() == grid.num_tets(), ErrorCode::shape_mismatch,
            "shape " + std::to_string(i) + " does not match the grid");
    const auto surface = surface_tets(grid, threshold_occupancy(f.occupancy, 0.5));
    CompensatedSum sum;
    std::size_t n = 0;
    for (std::size_t k = 0; k < grid.num_tets(); ++k) {
      if (!surface[k]) continue;
      sum.add(f.tet_deformation[k].norm());
      ++n;
    }
    if (n == 0) {
      warn("compute_mu: shape " + std::to_string(i) + " has no surface tets; skipped");
      continue;
    }
    total += sum.value() / static_cast<double>(n);
    ++counted;
  }
  require(counted > 0, ErrorCode::empty_input, "compute_mu: no shape has surface tets");
  return total / static_cast<double>(counted);
}

ExtractedSurface apply_deformation(const ExtractedSurface& surface) {
  require(surface.deformation.size() == surface.vertices.size(), ErrorCode::shape_mismatch,
          "surface has no per-vertex deformation");
  ExtractedSurface out = surface;
  for (std::size_t v = 0; v < out.vertices.size(); ++v) out.vertices[v] += surface.deformation[v];
  return out;
}

ExtractedSurface weighted_laplacian_smooth(const ExtractedSurface& surface, double beta, int iterations) {
  require(beta >= 0.0 && beta <= 1.0, ErrorCode::invalid_parameter, "beta must lie in [0, 1]");
  require(iterations >= 0, ErrorCode::invalid_parameter, "iterations must be non-negative");
  const bool has_d = surface.deformation.size() == surface.vertices.size();
  const auto nb = vertex_neighbors(surface);
  ExtractedSurface out = surface;
  if (beta == 1.0) return out;

  // Weights depend only on D, so they are fixed across iterations.
  std::vector<std::vector<double>> weights(nb.size());
  for (std::size_t i = 0; i < nb.size(); ++i) {
    auto& w = weights[i];
    w.assign(nb[i].size(), 0.0);
    double sum = 0.0;
    if (has_d) {
      const Vec3& di = surface.deformation[i];
      for (std::size_t j = 0; j < nb[i].size(); ++j) {
        const Vec3& dj = surface.deformation[nb[i][j]];
        const double denom = di.norm() * dj.norm();
        if (denom > 0.0) w[j] = std::abs(di.dot(dj)) / denom;
        sum += w[j];
      }
    }
    if (sum > 0.0) {
      for (double& x : w) x /= sum;
    } else {
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(std::max<std::size_t>(w.size(), 1)));
    }
  }

  std::vector<Vec3> next(out.vertices.size());
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < nb.size(); ++i) {
      if (nb[i].empty()) {
        next[i] = out.vertices[i];
        continue;
      }
      Vec3 avg = Vec3::Zero();
      for (std::size_t j = 0; j < nb[i].size(); ++j) avg += weights[i][j] * out.vertices[nb[i][j]];
      next[i] = beta * out.vertices[i] + (1.0 - beta) * avg;
    }
    out.vertices.swap(next);
  }
  return out;
}

double laplacian_energy(const ExtractedSurface& surface) {
  const auto nb = vertex_neighbors(surface);
  CompensatedSum e;
  for (std::size_t i = 0; i < nb.size(); ++i) {
    if (nb[i].empty()) continue;
    Vec3 mean = Vec3::Zero();
    for (auto j : nb[i]) mean += surface.vertices[j];
    mean /= static_cast<double>(nb[i].size());
    e.add((surface.vertices[i] - mean).squaredNorm());
  }
  return e.value();
}

bool is_closed(const ExtractedSurface& surface) {
  auto edges = directed_edges(surface);
  auto reversed = edges;
  for (auto& e : reversed) std::swap(e.first, e.second);
  std::sort(edges.begin(), edges.end());
  std::sort(reversed.begin(), reversed.end());
  return edges == reversed;
}

long euler_characteristic(const ExtractedSurface& surface) {
  auto edges = directed_edges(surface);
  for (auto& e : edges) {
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  const auto unique_edges = std::unique(edges.begin(), edges.end()) - edges.begin();
  std::vector<std::uint8_t> used(surface.vertices.size(), 0);
  for (const auto& f : surface.faces) used[f[0]] = used[f[1]] = used[f[2]] = 1;
  const long v = std::count(used.begin(), used.end(), std::uint8_t{1});
  return v - static_cast<long>(unique_edges) + static_cast<long>(surface.faces.size());
}

TriMesh to_trimesh(const ExtractedSurface& surface) { return TriMesh(surface.vertices, surface.faces); }

void export_surface_obj(const ExtractedSurface& surface, const std::string& path) {
  write_obj(path, surface.vertices, surface.faces);
}

Extraction extract_fields(const TetGrid& grid, const FieldSet& fields, const ExtractOptions& o) {
  require(fields.num_tets() == grid.num_tets(), ErrorCode::shape_mismatch, "fields do not match the grid");
  Extraction e;
  e.occupancy = threshold_occupancy(fields.occupancy, o.tau);
  if (o.mu > 0.0) {
    const Occupancy kept = deformation_filter(grid, e.occupancy, fields.tet_deformation, o.mu, o.gamma);
    for (std::size_t k = 0; k < kept.size(); ++k) e.filtered += e.occupancy[k] != kept[k] ? 1 : 0;
    e.occupancy = kept;
  }
  e.surface = extract_surface(grid, e.occupancy, fields.vertex_deformation);
  if (!fields.vertex_deformation.empty()) e.surface = apply_deformation(e.surface);
  if (o.smooth_iters > 0) e.surface = weighted_laplacian_smooth(e.surface, o.beta, o.smooth_iters);
  return e;
}

TetMesh build_tet_mesh(const TetGrid& grid, const Occupancy& occupied, const ExtractedSurface& surface) {
  check_length(grid, occupied);
  require(surface.vertex_map.size() == surface.vertices.size(), ErrorCode::shape_mismatch,
          "surface vertex map is incomplete");
  constexpr std::uint32_t kUnused = ~std::uint32_t{0};
  std::vector<std::uint32_t> remap(grid.num_vertices(), kUnused);
  TetMesh out;
  std::vector<Vec3> target;
  std::vector<std::uint32_t> grid_id;
  for (std::size_t k = 0; k < grid.num_tets(); ++k) {
    if (!occupied[k]) continue;
    std::array<std::uint32_t, 4> t{};
    for (int i = 0; i < 4; ++i) {
      const std::uint32_t g = grid.tets[k][static_cast<std::size_t>(i)];
      if (remap[g] == kUnused) {
        remap[g] = static_cast<std::uint32_t>(grid_id.size());
        grid_id.push_back(g);
        target.push_back(grid.vertices[g]);
      }
      t[static_cast<std::size_t>(i)] = remap[g];
    }
    out.tets.push_back(t);
    bool interior = true;
    for (int s = 0; s < 4; ++s) interior = interior && !is_free(grid, occupied, k, s);
    out.interior_tets += interior ? 1 : 0;
  }
  std::vector<std::uint8_t> on_surface(grid_id.size(), 0);
  for (std::size_t v = 0; v < surface.vertex_map.size(); ++v) {
    const std::uint32_t g = surface.vertex_map[v];
    require(g < grid.num_vertices() && remap[g] != kUnused, ErrorCode::shape_mismatch,
            "surface vertex is not part of an occupied tet");
    target[remap[g]] = surface.vertices[v];
    on_surface[remap[g]] = 1;
  }

  std::vector<double> scale(grid_id.size(), 1.0);
  auto position = [&](std::uint32_t v) {
    const Vec3& base = grid.vertices[grid_id[v]];
    return Vec3(base + scale[v] * (target[v] - base));
  };
  auto volume = [&](const std::array<std::uint32_t, 4>& t) {
    return signed_tet_volume(position(t[0]), position(t[1]), position(t[2]), position(t[3]));
  };
  for (int round = 0;; ++round) {
    bool inverted = false;
    for (const auto& t : out.tets) {
      if (volume(t) > 0.0) continue;
      inverted = true;
      for (auto v : t) {
        if (on_surface[v]) scale[v] = round + 1 < kPullBackRounds ? 0.5 * scale[v] : 0.0;
      }
    }
    if (!inverted) break;
  }
  out.vertices.resize(grid_id.size());
  for (std::uint32_t v = 0; v < grid_id.size(); ++v) {
    out.vertices[v] = position(v);
    out.pulled_back += scale[v] < 1.0 ? 1 : 0;
  }
  out.min_volume = out.tets.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  for (const auto& t : out.tets) out.min_volume = std::min(out.min_volume, volume(t));
  return out;
}

void export_tet_mesh(const TetMesh& mesh, const std::string& path) {
  write_tets_by_extension(path, mesh.vertices, mesh.tets);
}

}  // namespace tetfield
