#pragma once

// Layer stack over flat parameter vectors. A Sequential owns no weights: the
// caller passes a parameter vector, and backward accumulates into a gradient
// vector of the same length.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tetfield/shapefields.hpp"
#include "tetfield/tensorops.hpp"

namespace tetfield {

/// Grid hierarchy plus the geometry-only operators derived from it.
struct Geometry {
  GridHierarchy hierarchy;
  std::vector<Upsampler> upsamplers;  // upsamplers[n - 2] maps level n-1 to n
  VertexAveraging averaging;          // finest level
  bool upsample_includes_parent = true;

  const Upsampler& upsampler(int n) const { return upsamplers.at(static_cast<std::size_t>(n - 2)); }
};

std::shared_ptr<const Geometry> make_geometry(GridHierarchy hierarchy, bool upsample_includes_parent = true);

class Layer {
 public:
  virtual ~Layer() = default;
  virtual nlohmann::json describe() const = 0;
  virtual std::size_t param_count() const { return 0; }
  virtual void init(double* /*params*/, std::mt19937_64& /*rng*/) const {}
  virtual Matrix forward(const double* params, const Matrix& x) const = 0;
  /// x and y are this layer's input and output; adds parameter gradients into dparams.
  virtual Matrix backward(const double* params, const Matrix& x, const Matrix& y, const Matrix& dy,
                          double* dparams) const = 0;
};

/// He-style initialization for the given leaky slope, scaled by init_gain.
std::unique_ptr<Layer> make_conv(std::shared_ptr<const Geometry> geo, int level, int in, int out, double slope,
                                 double init_gain = 1.0);
std::unique_ptr<Layer> make_instance_norm(int channels);
std::unique_ptr<Layer> make_leaky_relu(double slope);
std::unique_ptr<Layer> make_pool(std::shared_ptr<const Geometry> geo, int level, PoolMode mode);
std::unique_ptr<Layer> make_upsample(std::shared_ptr<const Geometry> geo, int level);
/// Affine map of the flattened input to a 1 x out row.
std::unique_ptr<Layer> make_linear(std::size_t in, std::size_t out, double init_std);
/// Reinterprets a row-major tensor as rows x cols.
std::unique_ptr<Layer> make_reshape(Eigen::Index rows, Eigen::Index cols);

class Sequential {
 public:
  /// Activations: acts[0] is the input, acts[i + 1] the output of layer i.
  struct Tape {
    std::vector<Matrix> acts;
  };

  void add(std::unique_ptr<Layer> layer);
  std::size_t size() const { return layers_.size(); }
  std::size_t param_count() const { return offsets_.empty() ? 0 : offsets_.back(); }
  Eigen::VectorXd init(std::uint64_t seed) const;

  Matrix forward(const Eigen::VectorXd& params, const Matrix& x, Tape* tape = nullptr) const;
  /// Returns the input gradient; adds parameter gradients into grad.
  Matrix backward(const Eigen::VectorXd& params, const Tape& tape, const Matrix& dy, Eigen::VectorXd& grad) const;
  nlohmann::json describe() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::size_t> offsets_{0};
};

}  // namespace tetfield
