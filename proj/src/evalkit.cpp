#include "tetfield/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace tetfield {

namespace {

using Faces = std::vector<Triangle>;

Eigen::Matrix3d rotation_matrix(const Vec3& ypr) {
  return (Eigen::AngleAxisd(ypr.x(), Vec3::UnitZ()) * Eigen::AngleAxisd(ypr.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(ypr.z(), Vec3::UnitX()))
      .toRotationMatrix();
}

// Surface of revolution around local z from a profile of (rho, z) rings between
// two pole vertices. Profile runs from the south pole towards the north pole.
void revolve(const std::vector<std::pair<double, double>>& rings, double south_z, double north_z, int segments,
             std::vector<Vec3>& verts, Faces& faces) {
  const auto south = static_cast<std::uint32_t>(verts.size());
  verts.emplace_back(0.0, 0.0, south_z);
  const auto first_ring = static_cast<std::uint32_t>(verts.size());
  for (const auto& [rho, z] : rings) {
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * std::numbers::pi * s / segments;
      verts.emplace_back(rho * std::cos(phi), rho * std::sin(phi), z);
    }
  }
  const auto north = static_cast<std::uint32_t>(verts.size());
  verts.emplace_back(0.0, 0.0, north_z);
  const auto seg = static_cast<std::uint32_t>(segments);
  auto at = [&](std::size_t ring, std::uint32_t s) {
    return first_ring + static_cast<std::uint32_t>(ring) * seg + (s % seg);
  };
  for (std::uint32_t s = 0; s < seg; ++s) faces.push_back({south, at(0, s + 1), at(0, s)});
  for (std::size_t r = 0; r + 1 < rings.size(); ++r) {
    for (std::uint32_t s = 0; s < seg; ++s) {
      faces.push_back({at(r, s), at(r, s + 1), at(r + 1, s + 1)});
      faces.push_back({at(r, s), at(r + 1, s + 1), at(r + 1, s)});
    }
  }
  const std::size_t last = rings.size() - 1;
  for (std::uint32_t s = 0; s < seg; ++s) faces.push_back({north, at(last, s), at(last, s + 1)});
}

void make_sphere(double r, int segments, std::vector<Vec3>& verts, Faces& faces) {
  const int stacks = std::max(2, segments / 2);
  std::vector<std::pair<double, double>> rings;
  for (int i = 1; i < stacks; ++i) {
    const double theta = std::numbers::pi * i / stacks;  // from the south pole
    rings.emplace_back(r * std::sin(theta), -r * std::cos(theta));
  }
  revolve(rings, -r, r, segments, verts, faces);
}

void make_capsule(double r, double half, int segments, std::vector<Vec3>& verts, Faces& faces) {
  const int cap_stacks = std::max(2, segments / 4);
  std::vector<std::pair<double, double>> rings;
  for (int i = 1; i <= cap_stacks; ++i) {
    const double theta = 0.5 * std::numbers::pi * i / cap_stacks;
    rings.emplace_back(r * std::sin(theta), -half - r * std::cos(theta));
  }
  for (int i = 0; i < cap_stacks; ++i) {
    const double theta = 0.5 * std::numbers::pi * (cap_stacks - i) / cap_stacks;
    rings.emplace_back(r * std::sin(theta), half + r * std::cos(theta));
  }
  // The two equator rings (i == cap_stacks above, i == 0 below) bound the cylinder.
  revolve(rings, -half - r, half + r, segments, verts, faces);
}

void make_torus(double major, double minor, int segments, std::vector<Vec3>& verts, Faces& faces) {
  const int ring_segments = segments;
  const int tube_segments = std::max(3, segments / 2);
  for (int i = 0; i < ring_segments; ++i) {
    const double u = 2.0 * std::numbers::pi * i / ring_segments;
    for (int j = 0; j < tube_segments; ++j) {
      const double v = 2.0 * std::numbers::pi * j / tube_segments;
      const double rho = major + minor * std::cos(v);
      verts.emplace_back(rho * std::cos(u), rho * std::sin(u), minor * std::sin(v));
    }
  }
  auto at = [&](int i, int j) {
    return static_cast<std::uint32_t>((i % ring_segments) * tube_segments + (j % tube_segments));
  };
  for (int i = 0; i < ring_segments; ++i) {
    for (int j = 0; j < tube_segments; ++j) {
      faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
}

void make_box(const Vec3& e, std::vector<Vec3>& verts, Faces& faces) {
  const Vec3 h = 0.5 * e;
  for (int i = 0; i < 8; ++i) {
    verts.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z());
  }
  // Outward orientation, two triangles per side.
  const Faces box = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                     {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  faces.insert(faces.end(), box.begin(), box.end());
}

bool canonical_less(const TriMesh& a, const TriMesh& b) {
  if (a.vertices().size() != b.vertices().size()) return a.vertices().size() < b.vertices().size();
  if (a.faces().size() != b.faces().size()) return a.faces().size() < b.faces().size();
  for (std::size_t i = 0; i < a.vertices().size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      if (a.vertices()[i][c] != b.vertices()[i][c]) return a.vertices()[i][c] < b.vertices()[i][c];
    }
  }
  return a.faces() < b.faces();
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
}

}  // namespace

const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::torus: return "torus";
    case ShapeKind::box: return "box";
    case ShapeKind::capsule: return "capsule";
  }
  return "sphere";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  for (auto k : {ShapeKind::sphere, ShapeKind::torus, ShapeKind::box, ShapeKind::capsule}) {
    if (name == to_string(k)) return k;
  }
  fail(ErrorCode::invalid_parameter, "unknown shape kind '" + name + "'");
}

void to_json(nlohmann::json& j, const ShapeSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"radius", s.radius},
                     {"major_radius", s.major_radius},
                     {"minor_radius", s.minor_radius},
                     {"half_length", s.half_length},
                     {"extents", {s.extents.x(), s.extents.y(), s.extents.z()}},
                     {"density", s.density},
                     {"center", {s.center.x(), s.center.y(), s.center.z()}},
                     {"rotation", {s.rotation.x(), s.rotation.y(), s.rotation.z()}},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ShapeSpec& s) {
  static const std::vector<std::string> known = {"kind",    "radius", "major_radius", "minor_radius", "half_length",
                                                 "extents", "density", "center",      "rotation",     "seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorCode::parse_error, "unknown shape spec key '" + key + "'");
    }
  }
  auto vec = [](const nlohmann::json& a) { return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()); };
  s = ShapeSpec{};
  s.kind = shape_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("radius")) s.radius = j["radius"].get<double>();
  if (j.contains("major_radius")) s.major_radius = j["major_radius"].get<double>();
  if (j.contains("minor_radius")) s.minor_radius = j["minor_radius"].get<double>();
  if (j.contains("half_length")) s.half_length = j["half_length"].get<double>();
  if (j.contains("extents")) s.extents = vec(j["extents"]);
  if (j.contains("density")) s.density = j["density"].get<int>();
  if (j.contains("center")) s.center = vec(j["center"]);
  if (j.contains("rotation")) s.rotation = vec(j["rotation"]);
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
}

TriMesh generate(const ShapeSpec& spec) {
  require(spec.density >= 4, ErrorCode::invalid_parameter, "shape density must be >= 4");
  std::vector<Vec3> verts;
  Faces faces;
  switch (spec.kind) {
    case ShapeKind::sphere:
      require(spec.radius > 0.0, ErrorCode::invalid_parameter, "sphere radius must be positive");
      make_sphere(spec.radius, spec.density, verts, faces);
      break;
    case ShapeKind::torus:
      require(spec.minor_radius > 0.0 && spec.major_radius > 0.0, ErrorCode::invalid_parameter,
              "torus radii must be positive");
      require(spec.minor_radius < spec.major_radius, ErrorCode::invalid_parameter,
              "torus tube radius must be smaller than the ring radius");
      make_torus(spec.major_radius, spec.minor_radius, spec.density, verts, faces);
      break;
    case ShapeKind::box:
      require(spec.extents.minCoeff() > 0.0, ErrorCode::invalid_parameter, "box extents must be positive");
      make_box(spec.extents, verts, faces);
      break;
    case ShapeKind::capsule:
      require(spec.radius > 0.0 && spec.half_length >= 0.0, ErrorCode::invalid_parameter,
              "capsule radius must be positive and half-length non-negative");
      make_capsule(spec.radius, spec.half_length, spec.density, verts, faces);
      break;
  }
  const Eigen::Matrix3d R = rotation_matrix(spec.rotation);
  for (auto& v : verts) v = R * v + spec.center;
  return TriMesh(std::move(verts), std::move(faces));
}

std::vector<Vec3> sample_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed) {
  require(!mesh.empty(), ErrorCode::empty_input, "cannot sample an empty mesh");
  std::vector<double> cdf(mesh.faces().size());
  double total = 0.0;
  for (std::uint32_t f = 0; f < mesh.faces().size(); ++f) {
    total += mesh.face_area(f);
    cdf[f] = total;
  }
  require(total > 0.0, ErrorCode::empty_input, "mesh has zero surface area");
  std::mt19937_64 rng(seed);
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = uniform(rng, 0.0, total);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
    if (it == cdf.end()) --it;
    const auto& t = mesh.faces()[static_cast<std::size_t>(it - cdf.begin())];
    const double s = std::sqrt(uniform(rng, 0.0, 1.0));
    const double r = uniform(rng, 0.0, 1.0);
    const Vec3& a = mesh.vertices()[t[0]];
    const Vec3& b = mesh.vertices()[t[1]];
    const Vec3& c = mesh.vertices()[t[2]];
    out.push_back((1.0 - s) * a + s * (1.0 - r) * b + s * r * c);
  }
  return out;
}

double chamfer_from_samples(const TriMesh& a, const std::vector<Vec3>& samples_a, const TriMesh& b,
                            const std::vector<Vec3>& samples_b) {
  require(!a.empty() && !b.empty(), ErrorCode::empty_input, "chamfer of an empty mesh");
  require(!samples_a.empty() && !samples_b.empty(), ErrorCode::empty_input, "chamfer needs samples");
  auto one_way = [](const std::vector<Vec3>& samples, const TriMesh& target) {
    std::vector<double> d2(samples.size());
    parallel_for(samples.size(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const double d = target.closest_point(samples[i]).distance;
        d2[i] = d * d;
      }
    });
    CompensatedSum s;
    for (double x : d2) s.add(x);
    return s.value() / static_cast<double>(samples.size());
  };
  return 0.5 * (one_way(samples_a, b) + one_way(samples_b, a));
}

double chamfer(const TriMesh& a, const TriMesh& b, std::size_t samples, std::uint64_t seed) {
  require(samples > 0, ErrorCode::invalid_parameter, "chamfer needs at least one sample");
  return chamfer_from_samples(a, sample_surface(a, samples, seed), b, sample_surface(b, samples, seed + 1));
}

double variety(const std::vector<TriMesh>& meshes, const VarietyOptions& options) {
  require(meshes.size() >= 2, ErrorCode::invalid_parameter, "variety needs at least two meshes");
  require(options.closest >= 1, ErrorCode::invalid_parameter, "closest must be >= 1");
  require(options.closest <= options.pairs, ErrorCode::invalid_parameter, "closest (n) must not exceed pairs (k)");

  std::vector<std::size_t> order(meshes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return canonical_less(meshes[i], meshes[j]); });

  std::vector<std::pair<std::size_t, std::size_t>> all_pairs;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) all_pairs.emplace_back(i, j);
  }
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  if (options.pairs >= all_pairs.size()) {
    chosen = all_pairs;
  } else {
    std::mt19937_64 rng(options.seed);
    for (std::size_t i = 0; i < options.pairs; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all_pairs.size() - 1);
      std::swap(all_pairs[i], all_pairs[pick(rng)]);
    }
    chosen.assign(all_pairs.begin(), all_pairs.begin() + static_cast<std::ptrdiff_t>(options.pairs));
  }
  require(options.closest <= chosen.size(), ErrorCode::invalid_parameter, "closest exceeds the number of pairs");

  std::vector<std::vector<Vec3>> samples(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) samples[i] = sample_surface(meshes[order[i]], options.samples, options.seed + i);

  std::vector<double> distances;
  distances.reserve(chosen.size());
  for (const auto& [i, j] : chosen) {
    distances.push_back(chamfer_from_samples(meshes[order[i]], samples[i], meshes[order[j]], samples[j]));
  }
  std::sort(distances.begin(), distances.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < options.closest; ++i) sum += distances[i];
  return sum / static_cast<double>(options.closest);
}

std::vector<ShapeSpec> random_shape_specs(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ShapeSpec> specs;
  specs.reserve(count);
  constexpr double pi = std::numbers::pi;
  for (std::size_t i = 0; i < count; ++i) {
    ShapeSpec s;
    s.seed = seed * 1000003ull + i;
    s.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 3)(rng));
    s.density = 32;
    switch (s.kind) {
      case ShapeKind::sphere:
        s.radius = uniform(rng, 0.28, 0.42);
        break;
      case ShapeKind::torus:
        s.major_radius = uniform(rng, 0.24, 0.30);
        s.minor_radius = uniform(rng, 0.10, 0.13);
        s.rotation = Vec3(uniform(rng, 0.0, pi), uniform(rng, -0.35, 0.35), 0.0);
        break;
      case ShapeKind::box:
        s.extents = Vec3(uniform(rng, 0.35, 0.7), uniform(rng, 0.35, 0.7), uniform(rng, 0.35, 0.7));
        s.rotation = Vec3(uniform(rng, 0.0, 0.5 * pi), uniform(rng, -0.25, 0.25), uniform(rng, -0.25, 0.25));
        break;
      case ShapeKind::capsule:
        s.radius = uniform(rng, 0.13, 0.2);
        s.half_length = uniform(rng, 0.1, 0.22);
        s.rotation = Vec3(uniform(rng, 0.0, pi), uniform(rng, 0.0, 0.5 * pi), 0.0);
        break;
    }
    specs.push_back(s);
  }
  return specs;
}

ToyDataset build_dataset_from_specs(const std::vector<ShapeSpec>& specs, std::uint64_t split_seed,
                                    const GridHierarchy& hierarchy) {
  ToyDataset data;
  data.specs = specs;
  const VertexAveraging averaging(hierarchy.finest(), hierarchy.finest_incidence());
  for (const auto& spec : specs) {
    data.meshes.push_back(normalize_to_unit_cube(generate(spec)));
    data.fields.push_back(encode_shape(data.meshes.back(), hierarchy, averaging));
  }
  std::vector<std::size_t> idx(specs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(split_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_val = specs.size() / 6;
  data.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  data.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(data.validation.begin(), data.validation.end());
  std::sort(data.train.begin(), data.train.end());
  return data;
}

ToyDataset build_toy_dataset(std::size_t count, std::uint64_t seed, const GridHierarchy& hierarchy) {
  return build_dataset_from_specs(random_shape_specs(count, seed), seed, hierarchy);
}

std::vector<ShapeSpec> load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, path + ": " + e.what());
  }
  require(j.is_array(), ErrorCode::parse_error, path + ": manifest must be a JSON list of shape specs");
  std::vector<ShapeSpec> specs;
  for (const auto& item : j) specs.push_back(item.get<ShapeSpec>());
  return specs;
}

void save_manifest(const std::vector<ShapeSpec>& specs, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot write manifest: " + path);
  out << nlohmann::json(specs).dump(2) << '\n';
}

}  // namespace tetfield
