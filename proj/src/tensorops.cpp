#include "tetfield/tensorops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <memory>
#include <random>

namespace tetfield {

namespace {

using Eigen::Index;

void require_level(const GridHierarchy& h, int n, const Matrix& x, const char* op) {
  require(n >= 1 && n <= h.levels(), ErrorCode::invalid_parameter, std::string(op) + ": level out of range");
  require(static_cast<std::size_t>(x.rows()) == h.level(n).num_tets(), ErrorCode::shape_mismatch,
          std::string(op) + ": row count does not match the grid level");
}

Eigen::VectorXd flat(const Matrix& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Matrix shaped(const Eigen::VectorXd& v, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Index n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace

void require_finite(const Matrix& x, const std::string& where) {
  require(x.allFinite(), ErrorCode::numeric_error, where + ": non-finite value");
}

Matrix conv_gather(const TetGrid& grid, const Matrix& x) {
  require(static_cast<std::size_t>(x.rows()) == grid.num_tets(), ErrorCode::shape_mismatch,
          "conv: row count does not match the grid");
  const Index C = x.cols();
  Matrix g(x.rows(), 5 * C);
  parallel_for(grid.num_tets(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      double* out = g.data() + static_cast<Index>(k) * 5 * C;
      std::copy_n(x.data() + static_cast<Index>(k) * C, C, out);
      for (int s = 0; s < 4; ++s) {
        const auto n = grid.neighbors[k][s];
        double* slot = out + (s + 1) * C;
        if (n == kNoNeighbor) {
          std::fill_n(slot, C, 0.0);
        } else {
          std::copy_n(x.data() + n * C, C, slot);
        }
      }
    }
  });
  return g;
}

namespace {

constexpr Index kConvTile = 256;

// Rows [r0, r0 + n) of the conv gather into tile.
void gather_rows(const TetGrid& grid, const Matrix& x, Index r0, Index n, Matrix& tile) {
  const Index C = x.cols();
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(r0 + i);
    double* out = tile.data() + i * 5 * C;
    std::copy_n(x.data() + (r0 + i) * C, C, out);
    for (int s = 0; s < 4; ++s) {
      const auto nb = grid.neighbors[k][s];
      double* slot = out + (s + 1) * C;
      if (nb == kNoNeighbor) {
        std::fill_n(slot, C, 0.0);
      } else {
        std::copy_n(x.data() + nb * C, C, slot);
      }
    }
  }
}

// Like gather_rows on dy, but neighbour rows land in the block of the slot
// that points back at the row, so dx = tile * [W_0^T; ...; W_4^T].
void gather_back_rows(const TetGrid& grid, const Matrix& dy, Index r0, Index n, Matrix& tile) {
  const Index C = dy.cols();
  tile.topRows(n).setZero();
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(r0 + i);
    double* out = tile.data() + i * 5 * C;
    std::copy_n(dy.data() + (r0 + i) * C, C, out);
    for (int s = 0; s < 4; ++s) {
      const auto nb = grid.neighbors[k][s];
      if (nb == kNoNeighbor) continue;
      double* slot = out + (grid.back_slot[k][s] + 1) * C;
      const double* src = dy.data() + nb * C;
      for (Index c = 0; c < C; ++c) slot[c] += src[c];
    }
  }
}

}  // namespace

Matrix conv_forward(const TetGrid& grid, const Matrix& x, const Matrix& w, const Eigen::RowVectorXd& bias) {
  require(static_cast<std::size_t>(x.rows()) == grid.num_tets(), ErrorCode::shape_mismatch,
          "conv: row count does not match the grid");
  require(w.rows() == 5 * x.cols(), ErrorCode::shape_mismatch, "conv: weight rows must be 5 * input channels");
  require(bias.size() == w.cols(), ErrorCode::shape_mismatch, "conv: bias length must equal output channels");
  const Index K = x.rows();
  Matrix y(K, w.cols());
  const auto tiles = static_cast<std::size_t>((K + kConvTile - 1) / kConvTile);
  parallel_for(tiles, [&](std::size_t begin, std::size_t end) {
    Matrix tile(kConvTile, w.rows());
    for (std::size_t t = begin; t < end; ++t) {
      const Index r0 = static_cast<Index>(t) * kConvTile;
      const Index n = std::min(kConvTile, K - r0);
      gather_rows(grid, x, r0, n, tile);
      y.middleRows(r0, n).noalias() = tile.topRows(n) * w;
      y.middleRows(r0, n).rowwise() += bias;
    }
  }, 4);
  return y;
}

Matrix conv_backward(const TetGrid& grid, const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw,
                     Eigen::RowVectorXd& dbias) {
  require(dy.rows() == x.rows() && dy.cols() == w.cols(), ErrorCode::shape_mismatch, "conv backward: dy shape");
  require(static_cast<std::size_t>(x.rows()) == grid.num_tets(), ErrorCode::shape_mismatch,
          "conv backward: row count does not match the grid");
  const Index C = x.cols();
  const Index Cout = w.cols();
  const Index K = x.rows();
  Matrix wt(5 * Cout, C);
  for (int b = 0; b < 5; ++b) wt.middleRows(b * Cout, Cout) = w.middleRows(b * C, C).transpose();
  dbias += dy.colwise().sum();
  Matrix dx(K, C);
  Matrix tile(kConvTile, 5 * C);
  Matrix back(kConvTile, 5 * Cout);
  for (Index r0 = 0; r0 < K; r0 += kConvTile) {
    const Index n = std::min(kConvTile, K - r0);
    gather_rows(grid, x, r0, n, tile);
    dw.noalias() += tile.topRows(n).transpose() * dy.middleRows(r0, n);
    gather_back_rows(grid, dy, r0, n, back);
    dx.middleRows(r0, n).noalias() = back.topRows(n) * wt;
  }
  return dx;
}

const char* to_string(PoolMode mode) { return mode == PoolMode::avg ? "avg" : "max"; }

PoolMode pool_mode_from_string(const std::string& name) {
  if (name == "avg") return PoolMode::avg;
  if (name == "max") return PoolMode::max;
  fail(ErrorCode::invalid_parameter, "unknown pool mode '" + name + "'");
}

Matrix pool_forward(const GridHierarchy& h, int n, const Matrix& x, PoolMode mode) {
  require(n >= 2, ErrorCode::invalid_parameter, "pool: input must be above level 1");
  require_level(h, n, x, "pool");
  const std::size_t K = h.level(n - 1).num_tets();
  Matrix y(static_cast<Index>(K), x.cols());
  const Index C = x.cols();
  for (std::size_t p = 0; p < K; ++p) {
    const auto& ch = h.children(n - 1, p);
    const auto r = static_cast<Index>(p);
    if (mode == PoolMode::avg) {
      const double* c[8];
      for (int i = 0; i < 8; ++i) c[i] = x.data() + static_cast<Index>(ch[i]) * C;
      double* out = y.data() + r * C;
      // Pairwise tree sum: exact when all children agree.
      for (Index j = 0; j < C; ++j) {
        out[j] = (((c[0][j] + c[1][j]) + (c[2][j] + c[3][j])) + ((c[4][j] + c[5][j]) + (c[6][j] + c[7][j]))) / 8.0;
      }
      continue;
    }
    y.row(r) = x.row(ch[0]);
    for (int i = 1; i < 8; ++i) y.row(r) = y.row(r).cwiseMax(x.row(ch[i]));
  }
  return y;
}

Matrix pool_backward(const GridHierarchy& h, int n, const Matrix& x, const Matrix& dy, PoolMode mode) {
  require(n >= 2, ErrorCode::invalid_parameter, "pool: input must be above level 1");
  require_level(h, n, x, "pool backward");
  const std::size_t K = h.level(n - 1).num_tets();
  require(static_cast<std::size_t>(dy.rows()) == K && dy.cols() == x.cols(), ErrorCode::shape_mismatch,
          "pool backward: dy shape");
  Matrix dx = Matrix::Zero(x.rows(), x.cols());
  for (std::size_t p = 0; p < K; ++p) {
    const auto& ch = h.children(n - 1, p);
    const auto r = static_cast<Index>(p);
    if (mode == PoolMode::avg) {
      const double* g = dy.data() + r * x.cols();
      for (auto c : ch) {
        double* out = dx.data() + static_cast<Index>(c) * x.cols();
        for (Index j = 0; j < x.cols(); ++j) out[j] = g[j] / 8.0;
      }
      continue;
    }
    for (Index c = 0; c < x.cols(); ++c) {
      int best = 0;
      for (int i = 1; i < 8; ++i) {
        if (x(ch[i], c) > x(ch[best], c)) best = i;
      }
      dx(ch[best], c) = dy(r, c);
    }
  }
  return dx;
}

Upsampler::Upsampler(const GridHierarchy& h, int n, bool include_parent) : level_(n) {
  require(n >= 2 && n <= h.levels(), ErrorCode::invalid_parameter, "upsample: target level out of range");
  const TetGrid& coarse = h.level(n - 1);
  const TetGrid& fine = h.level(n);
  cols_ = coarse.num_tets();
  const auto& parents = h.parent_map[static_cast<std::size_t>(n - 2)];
  row_offsets_.assign(1, 0);
  for (std::size_t c = 0; c < fine.num_tets(); ++c) {
    const auto p = parents[c];
    std::vector<std::uint32_t> set;
    if (include_parent) set.push_back(p);
    for (auto nb : coarse.neighbors[p]) {
      if (nb != kNoNeighbor) set.push_back(static_cast<std::uint32_t>(nb));
    }
    if (set.empty()) set.push_back(p);
    std::sort(set.begin(), set.end());
    double total = 0.0;
    const std::size_t start = weight_.size();
    for (auto l : set) {
      const double w = 1.0 / std::max((coarse.centroids[l] - fine.centroids[c]).norm(), 1e-12);
      col_index_.push_back(l);
      weight_.push_back(w);
      total += w;
    }
    for (std::size_t i = start; i < weight_.size(); ++i) weight_[i] /= total;
    row_offsets_.push_back(static_cast<std::uint32_t>(weight_.size()));
  }
  // Transpose by counting sort; rows within a column stay ascending.
  t_offsets_.assign(cols_ + 1, 0);
  for (auto l : col_index_) ++t_offsets_[l + 1];
  for (std::size_t l = 0; l < cols_; ++l) t_offsets_[l + 1] += t_offsets_[l];
  t_row_.resize(col_index_.size());
  t_weight_.resize(col_index_.size());
  std::vector<std::uint32_t> fill(t_offsets_.begin(), t_offsets_.end() - 1);
  for (std::size_t r = 0; r + 1 < row_offsets_.size(); ++r) {
    for (auto i = row_offsets_[r]; i < row_offsets_[r + 1]; ++i) {
      const auto slot = fill[col_index_[i]]++;
      t_row_[slot] = static_cast<std::uint32_t>(r);
      t_weight_[slot] = weight_[i];
    }
  }
}

Matrix Upsampler::forward(const Matrix& x) const {
  require(static_cast<std::size_t>(x.rows()) == cols_, ErrorCode::shape_mismatch, "upsample: input rows");
  const Index C = x.cols();
  Matrix y = Matrix::Zero(static_cast<Index>(rows()), C);
  parallel_for(rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      double* out = y.data() + static_cast<Index>(r) * C;
      for (auto i = row_offsets_[r]; i < row_offsets_[r + 1]; ++i) {
        const double* src = x.data() + static_cast<Index>(col_index_[i]) * C;
        for (Index j = 0; j < C; ++j) out[j] += weight_[i] * src[j];
      }
    }
  });
  return y;
}

Matrix Upsampler::backward(const Matrix& dy) const {
  require(static_cast<std::size_t>(dy.rows()) == rows(), ErrorCode::shape_mismatch, "upsample backward: dy rows");
  const Index C = dy.cols();
  Matrix dx = Matrix::Zero(static_cast<Index>(cols_), C);
  parallel_for(cols_, [&](std::size_t begin, std::size_t end) {
    for (std::size_t l = begin; l < end; ++l) {
      double* out = dx.data() + static_cast<Index>(l) * C;
      for (auto i = t_offsets_[l]; i < t_offsets_[l + 1]; ++i) {
        const double* src = dy.data() + static_cast<Index>(t_row_[i]) * C;
        for (Index j = 0; j < C; ++j) out[j] += t_weight_[i] * src[j];
      }
    }
  });
  return dx;
}

Eigen::MatrixXd Upsampler::dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Index>(rows()), static_cast<Index>(cols_));
  for (std::size_t r = 0; r < rows(); ++r) {
    for (auto i = row_offsets_[r]; i < row_offsets_[r + 1]; ++i) d(static_cast<Index>(r), col_index_[i]) = weight_[i];
  }
  return d;
}

Matrix instance_norm_forward(const Matrix& x, const Eigen::RowVectorXd& gain, const Eigen::RowVectorXd& shift) {
  require(x.rows() >= 2, ErrorCode::invalid_parameter, "instance norm needs at least two tets");
  require(gain.size() == x.cols() && shift.size() == x.cols(), ErrorCode::shape_mismatch,
          "instance norm: gain/shift length");
  const double K = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().sum() / K;
  Matrix y = x.rowwise() - mean;
  const Eigen::RowVectorXd var = y.cwiseAbs2().colwise().sum() / K;
  const Eigen::RowVectorXd scale = gain.array() / (var.array() + kNormEpsilon).sqrt();
  y.array().rowwise() *= scale.array();
  y.rowwise() += shift;
  return y;
}

Matrix instance_norm_backward(const Matrix& x, const Eigen::RowVectorXd& gain, const Matrix& dy,
                              Eigen::RowVectorXd& dgain, Eigen::RowVectorXd& dshift) {
  require(dy.rows() == x.rows() && dy.cols() == x.cols(), ErrorCode::shape_mismatch, "instance norm backward: dy");
  const double K = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().sum() / K;
  Matrix xhat = x.rowwise() - mean;
  const Eigen::RowVectorXd var = xhat.cwiseAbs2().colwise().sum() / K;
  const Eigen::RowVectorXd inv_std = (var.array() + kNormEpsilon).rsqrt();
  xhat.array().rowwise() *= inv_std.array();

  dshift += dy.colwise().sum();
  dgain += dy.cwiseProduct(xhat).colwise().sum();
  Matrix dxhat = dy;
  dxhat.array().rowwise() *= gain.array();
  const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
  Matrix dx = (K * dxhat).rowwise() - sum_d;
  dx -= xhat * sum_dx.asDiagonal();
  dx.array().rowwise() *= (inv_std / K).array();
  return dx;
}

namespace {

// out = x > 0 ? a : slope * a, as a bit blend so the loop vectorizes.
void leaky_blend(const double* __restrict x, const double* __restrict a, double* __restrict out, Index n,
                 double slope) {
  for (Index i = 0; i < n; ++i) {
    const std::uint64_t keep = -static_cast<std::uint64_t>(x[i] > 0.0);
    out[i] = std::bit_cast<double>((std::bit_cast<std::uint64_t>(a[i]) & keep) |
                                   (std::bit_cast<std::uint64_t>(slope * a[i]) & ~keep));
  }
}

}  // namespace

Matrix leaky_relu_forward(const Matrix& x, double slope) {
  Matrix y(x.rows(), x.cols());
  leaky_blend(x.data(), x.data(), y.data(), x.size(), slope);
  return y;
}

Matrix leaky_relu_backward(const Matrix& x, const Matrix& dy, double slope) {
  require(dy.rows() == x.rows() && dy.cols() == x.cols(), ErrorCode::shape_mismatch, "leaky relu backward: dy");
  Matrix dx(x.rows(), x.cols());
  leaky_blend(x.data(), dy.data(), dx.data(), x.size(), slope);
  return dx;
}

Matrix linear_forward(const Matrix& x, const Matrix& w, const Eigen::RowVectorXd& bias) {
  require(w.cols() == x.size(), ErrorCode::shape_mismatch, "linear: weight columns must equal input size");
  require(bias.size() == w.rows(), ErrorCode::shape_mismatch, "linear: bias length");
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), x.size());
  Matrix y(1, w.rows());
  y.row(0) = (w * v).transpose() + bias;
  return y;
}

Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Eigen::RowVectorXd& dbias) {
  require(dy.size() == w.rows(), ErrorCode::shape_mismatch, "linear backward: dy length");
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), x.size());
  const Eigen::Map<const Eigen::VectorXd> g(dy.data(), dy.size());
  dw.noalias() += g * v.transpose();
  dbias += g.transpose();
  Matrix dx(x.rows(), x.cols());
  Eigen::Map<Eigen::VectorXd>(dx.data(), dx.size()).noalias() = w.transpose() * g;
  return dx;
}

GradcheckResult gradcheck(const GradcheckCase& c, double tolerance, std::uint64_t seed, double step) {
  GradcheckResult result;
  result.name = c.name;
  std::mt19937_64 rng(seed);
  const Eigen::VectorXd out = c.forward(c.inputs);
  const Eigen::VectorXd upstream = random_vector(rng, out.size());
  const auto analytic = c.backward(c.inputs, upstream);
  require(analytic.size() == c.inputs.size(), ErrorCode::shape_mismatch, c.name + ": gradient count");
  auto inputs = c.inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    require(analytic[t].size() == inputs[t].size(), ErrorCode::shape_mismatch, c.name + ": gradient shape");
    Eigen::VectorXd numeric(inputs[t].size());
    for (Index i = 0; i < inputs[t].size(); ++i) {
      const double saved = inputs[t][i];
      inputs[t][i] = saved + step;
      const double plus = upstream.dot(c.forward(inputs));
      inputs[t][i] = saved - step;
      const double minus = upstream.dot(c.forward(inputs));
      inputs[t][i] = saved;
      numeric[i] = (plus - minus) / (2.0 * step);
    }
    const double scale = std::max({analytic[t].cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-30});
    const double err = (analytic[t] - numeric).cwiseAbs().maxCoeff() / scale;
    result.errors.push_back(err);
    result.max_error = std::max(result.max_error, err);
  }
  result.passed = result.max_error <= tolerance;
  return result;
}

std::vector<GradcheckCase> operator_gradcheck_cases(const GridHierarchy& h, std::uint64_t seed) {
  require(h.levels() >= 2, ErrorCode::invalid_parameter, "gradcheck cases need a two-level hierarchy");
  std::mt19937_64 rng(seed);
  const int n = h.levels();
  const TetGrid* fine = &h.level(n);
  const auto Kf = static_cast<Index>(fine->num_tets());
  const auto Kc = static_cast<Index>(h.level(n - 1).num_tets());
  std::vector<GradcheckCase> cases;

  {
    const Index cin = 3;
    const Index cout = 2;
    GradcheckCase c;
    c.name = "tet_conv";
    c.inputs = {random_vector(rng, Kf * cin), random_vector(rng, 5 * cin * cout, 0.5), random_vector(rng, cout)};
    c.forward = [=](const std::vector<Eigen::VectorXd>& in) {
      return flat(conv_forward(*fine, shaped(in[0], Kf, cin), shaped(in[1], 5 * cin, cout), in[2].transpose()));
    };
    c.backward = [=](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& up) {
      Matrix dw = Matrix::Zero(5 * cin, cout);
      Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(cout);
      const Matrix dx = conv_backward(*fine, shaped(in[0], Kf, cin), shaped(in[1], 5 * cin, cout), shaped(up, Kf, cout), dw, db);
      return std::vector<Eigen::VectorXd>{flat(dx), flat(dw), db.transpose()};
    };
    cases.push_back(std::move(c));
  }
  for (PoolMode mode : {PoolMode::avg, PoolMode::max}) {
    const Index C = 2;
    GradcheckCase c;
    c.name = std::string("tet_pool_") + to_string(mode);
    c.inputs = {random_vector(rng, Kf * C)};
    c.forward = [=, &h](const std::vector<Eigen::VectorXd>& in) {
      return flat(pool_forward(h, n, shaped(in[0], Kf, C), mode));
    };
    c.backward = [=, &h](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& up) {
      return std::vector<Eigen::VectorXd>{flat(pool_backward(h, n, shaped(in[0], Kf, C), shaped(up, Kc, C), mode))};
    };
    cases.push_back(std::move(c));
  }
  {
    const Index C = 2;
    auto up = std::make_shared<Upsampler>(h, n);
    GradcheckCase c;
    c.name = "tet_upsample";
    c.inputs = {random_vector(rng, Kc * C)};
    c.forward = [=](const std::vector<Eigen::VectorXd>& in) { return flat(up->forward(shaped(in[0], Kc, C))); };
    c.backward = [=](const std::vector<Eigen::VectorXd>&, const Eigen::VectorXd& g) {
      return std::vector<Eigen::VectorXd>{flat(up->backward(shaped(g, Kf, C)))};
    };
    cases.push_back(std::move(c));
  }
  {
    const Index C = 3;
    GradcheckCase c;
    c.name = "instance_norm";
    c.inputs = {random_vector(rng, Kf * C), random_vector(rng, C), random_vector(rng, C)};
    c.forward = [=](const std::vector<Eigen::VectorXd>& in) {
      return flat(instance_norm_forward(shaped(in[0], Kf, C), in[1].transpose(), in[2].transpose()));
    };
    c.backward = [=](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& g) {
      Eigen::RowVectorXd dg = Eigen::RowVectorXd::Zero(C);
      Eigen::RowVectorXd ds = Eigen::RowVectorXd::Zero(C);
      const Matrix dx = instance_norm_backward(shaped(in[0], Kf, C), in[1].transpose(), shaped(g, Kf, C), dg, ds);
      return std::vector<Eigen::VectorXd>{flat(dx), dg.transpose(), ds.transpose()};
    };
    cases.push_back(std::move(c));
  }
  {
    const Index C = 2;
    Eigen::VectorXd x = random_vector(rng, Kf * C);
    // Keep samples away from the kink so central differences stay one-sided.
    for (Index i = 0; i < x.size(); ++i) x[i] += x[i] >= 0.0 ? 0.01 : -0.01;
    GradcheckCase c;
    c.name = "leaky_relu";
    c.inputs = {x};
    c.forward = [=](const std::vector<Eigen::VectorXd>& in) { return flat(leaky_relu_forward(shaped(in[0], Kf, C))); };
    c.backward = [=](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& g) {
      return std::vector<Eigen::VectorXd>{flat(leaky_relu_backward(shaped(in[0], Kf, C), shaped(g, Kf, C)))};
    };
    cases.push_back(std::move(c));
  }
  {
    const Index C = 2;
    const Index out = 3;
    GradcheckCase c;
    c.name = "linear";
    c.inputs = {random_vector(rng, Kc * C), random_vector(rng, out * Kc * C, 0.2), random_vector(rng, out)};
    c.forward = [=](const std::vector<Eigen::VectorXd>& in) {
      return flat(linear_forward(shaped(in[0], Kc, C), shaped(in[1], out, Kc * C), in[2].transpose()));
    };
    c.backward = [=](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& g) {
      Matrix dw = Matrix::Zero(out, Kc * C);
      Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(out);
      const Matrix dx = linear_backward(shaped(in[0], Kc, C), shaped(in[1], out, Kc * C), shaped(g, 1, out), dw, db);
      return std::vector<Eigen::VectorXd>{flat(dx), flat(dw), db.transpose()};
    };
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace tetfield
