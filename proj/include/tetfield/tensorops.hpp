#pragma once

// Neural operators on tetrahedral grids. Feature tensors are K x C row-major
// matrices (one row per tet). Every operator has a forward and an analytic
// backward; backward functions accumulate (+=) into parameter gradients and
// return the input gradient.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tetfield/tetgrid.hpp"

namespace tetfield {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kDefaultLeakySlope = 0.2;

/// Throws numeric_error if any entry is NaN or infinite.
void require_finite(const Matrix& x, const std::string& where);

// Convolution. Weights are stored stacked: W is (5*Cin) x Cout, rows
// [s*Cin, (s+1)*Cin) hold the transposed slot-s matrix (slot 0 = self, slots
// 1..4 = neighbors[k][0..3]). Sentinel neighbors contribute zero.

/// K x 5Cin gather of [x_k, x_n0, x_n1, x_n2, x_n3].
Matrix conv_gather(const TetGrid& grid, const Matrix& x);
Matrix conv_forward(const TetGrid& grid, const Matrix& x, const Matrix& w, const Eigen::RowVectorXd& bias);
/// Returns dx; adds into dw and dbias.
Matrix conv_backward(const TetGrid& grid, const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw,
                     Eigen::RowVectorXd& dbias);

enum class PoolMode { avg, max };

const char* to_string(PoolMode mode);
PoolMode pool_mode_from_string(const std::string& name);

/// Pools level-n features (n >= 2) onto level n-1 over each supercell.
Matrix pool_forward(const GridHierarchy& h, int n, const Matrix& x, PoolMode mode);
/// Avg splits by 1/8; max routes to the first maximal child.
Matrix pool_backward(const GridHierarchy& h, int n, const Matrix& x, const Matrix& dy, PoolMode mode);

/// Fixed sparse map from level n-1 features to level n features: each child
/// averages its parent and the parent's neighbors with normalized inverse
/// centroid-distance weights.
class Upsampler {
 public:
  Upsampler() = default;
  Upsampler(const GridHierarchy& h, int n, bool include_parent = true);

  int level() const { return level_; }
  std::size_t rows() const { return row_offsets_.empty() ? 0 : row_offsets_.size() - 1; }
  std::size_t cols() const { return cols_; }

  Matrix forward(const Matrix& x) const;
  /// Transpose application.
  Matrix backward(const Matrix& dy) const;
  /// Dense copy, for tests.
  Eigen::MatrixXd dense() const;

 private:
  int level_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> row_offsets_;
  std::vector<std::uint32_t> col_index_;
  std::vector<double> weight_;
  // Transposed copy so backward is a deterministic gather.
  std::vector<std::uint32_t> t_offsets_;
  std::vector<std::uint32_t> t_row_;
  std::vector<double> t_weight_;
};

/// Per-channel normalization over all tets of one instance.
Matrix instance_norm_forward(const Matrix& x, const Eigen::RowVectorXd& gain, const Eigen::RowVectorXd& shift);
Matrix instance_norm_backward(const Matrix& x, const Eigen::RowVectorXd& gain, const Matrix& dy,
                              Eigen::RowVectorXd& dgain, Eigen::RowVectorXd& dshift);

Matrix leaky_relu_forward(const Matrix& x, double slope = kDefaultLeakySlope);
Matrix leaky_relu_backward(const Matrix& x, const Matrix& dy, double slope = kDefaultLeakySlope);

/// Affine map on the row-major flattening of x: y = W * vec(x) + b, returned as
/// a 1 x out row. W is out x (rows*cols).
Matrix linear_forward(const Matrix& x, const Matrix& w, const Eigen::RowVectorXd& bias);
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Eigen::RowVectorXd& dbias);

// Finite-difference checking.

struct GradcheckCase {
  std::string name;
  std::vector<Eigen::VectorXd> inputs;  // flattened tensors; every one is checked
  std::function<Eigen::VectorXd(const std::vector<Eigen::VectorXd>&)> forward;
  /// Gradients of <upstream, forward(inputs)> with respect to each input.
  std::function<std::vector<Eigen::VectorXd>(const std::vector<Eigen::VectorXd>&, const Eigen::VectorXd&)>
      backward;
};

struct GradcheckResult {
  std::string name;
  std::vector<double> errors;  // per input tensor
  double max_error = 0.0;
  bool passed = false;
};

inline constexpr double kGradcheckStep = 1e-5;

/// Contracts the op output with a seeded random upstream vector and compares
/// the analytic input gradients with central differences. Per-tensor error is
/// max|a - n| / max(max|a|, max|n|, 1e-30).
GradcheckResult gradcheck(const GradcheckCase& c, double tolerance, std::uint64_t seed, double step = kGradcheckStep);

/// Random small instances of every operator above on an (m=2, N=2) hierarchy.
std::vector<GradcheckCase> operator_gradcheck_cases(const GridHierarchy& h, std::uint64_t seed);

}  // namespace tetfield
