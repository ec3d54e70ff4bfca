#pragma once

// Procedural watertight shapes for desk-scale datasets, plus the Chamfer and
// variety metrics.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tetfield/shapefields.hpp"
#include "tetfield/trimesh.hpp"

namespace tetfield {

enum class ShapeKind { sphere, torus, box, capsule };

const char* to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::sphere;
  double radius = 0.4;          // sphere / capsule radius
  double major_radius = 0.3;    // torus ring radius
  double minor_radius = 0.1;    // torus tube radius
  double half_length = 0.2;     // capsule cylinder half-length (along local z)
  Vec3 extents{0.5, 0.5, 0.5};  // box side lengths
  int density = 32;             // segments around the main circle
  Vec3 center{0.5, 0.5, 0.5};
  Vec3 rotation{0.0, 0.0, 0.0};  // yaw (z), pitch (y), roll (x) in radians
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ShapeSpec& s);
void from_json(const nlohmann::json& j, ShapeSpec& s);

/// Outward-oriented watertight triangle mesh. Throws invalid_parameter for
/// non-positive sizes, too few segments, or a self-intersecting torus.
TriMesh generate(const ShapeSpec& spec);

/// Area-uniform surface samples, deterministic per seed.
std::vector<Vec3> sample_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed);

/// Symmetric squared Chamfer between precomputed sample sets:
/// (mean_a d(a, B)^2 + mean_b d(b, A)^2) / 2.
double chamfer_from_samples(const TriMesh& a, const std::vector<Vec3>& samples_a, const TriMesh& b,
                            const std::vector<Vec3>& samples_b);

inline constexpr std::size_t kDefaultChamferSamples = 10000;

double chamfer(const TriMesh& a, const TriMesh& b, std::size_t samples = kDefaultChamferSamples,
               std::uint64_t seed = 0);

struct VarietyOptions {
  std::size_t pairs = 250;
  std::size_t closest = 25;
  std::size_t samples = kDefaultChamferSamples;
  std::uint64_t seed = 0;
};

/// Mean Chamfer of the `closest` most similar among `pairs` sampled pairs.
/// When `pairs` covers every unordered pair, all pairs are used. Meshes are
/// sorted canonically first, so the result ignores input order.
double variety(const std::vector<TriMesh>& meshes, const VarietyOptions& options);

struct ToyDataset {
  std::vector<ShapeSpec> specs;
  std::vector<TriMesh> meshes;   // normalized into the unit cube
  std::vector<FieldSet> fields;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Random specs for the desk-scale dataset; deterministic per seed.
std::vector<ShapeSpec> random_shape_specs(std::size_t count, std::uint64_t seed);

/// `count` random shapes encoded on the finest grid; 5/1 train/validation split.
ToyDataset build_toy_dataset(std::size_t count, std::uint64_t seed, const GridHierarchy& hierarchy);
ToyDataset build_dataset_from_specs(const std::vector<ShapeSpec>& specs, std::uint64_t split_seed,
                                    const GridHierarchy& hierarchy);

std::vector<ShapeSpec> load_manifest(const std::string& path);
void save_manifest(const std::vector<ShapeSpec>& specs, const std::string& path);

}  // namespace tetfield
