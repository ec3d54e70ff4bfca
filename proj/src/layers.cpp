#include "tetfield/layers.hpp"

#include <cmath>

namespace tetfield {

namespace {

using Eigen::Index;

void fill_normal(double* p, std::size_t n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (std::size_t i = 0; i < n; ++i) p[i] = dist(rng);
}

class Conv final : public Layer {
 public:
  Conv(std::shared_ptr<const Geometry> geo, int level, int in, int out, double slope, double gain)
      : geo_(std::move(geo)), level_(level), in_(in), out_(out), slope_(slope), gain_(gain) {
    require(in > 0 && out > 0, ErrorCode::invalid_parameter, "conv channels must be positive");
    grid_ = &geo_->hierarchy.level(level);
  }
  nlohmann::json describe() const override {
    return {{"type", "conv"}, {"level", level_}, {"in", in_}, {"out", out_}};
  }
  std::size_t param_count() const override { return static_cast<std::size_t>(5 * in_ * out_ + out_); }
  void init(double* p, std::mt19937_64& rng) const override {
    const double stddev = gain_ * std::sqrt(2.0 / ((1.0 + slope_ * slope_) * 5.0 * in_));
    fill_normal(p, static_cast<std::size_t>(5 * in_ * out_), stddev, rng);
    std::fill(p + 5 * in_ * out_, p + param_count(), 0.0);
  }
  Matrix forward(const double* p, const Matrix& x) const override {
    return conv_forward(*grid_, x, weights(p), bias(p));
  }
  Matrix backward(const double* p, const Matrix& x, const Matrix&, const Matrix& dy, double* dp) const override {
    Matrix dw = Matrix::Zero(5 * in_, out_);
    Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(out_);
    Matrix dx = conv_backward(*grid_, x, weights(p), dy, dw, db);
    Eigen::Map<Matrix>(dp, 5 * in_, out_) += dw;
    Eigen::Map<Eigen::RowVectorXd>(dp + 5 * in_ * out_, out_) += db;
    return dx;
  }

 private:
  Matrix weights(const double* p) const { return Eigen::Map<const Matrix>(p, 5 * in_, out_); }
  Eigen::RowVectorXd bias(const double* p) const { return Eigen::Map<const Eigen::RowVectorXd>(p + 5 * in_ * out_, out_); }

  std::shared_ptr<const Geometry> geo_;
  const TetGrid* grid_ = nullptr;
  int level_;
  int in_;
  int out_;
  double slope_;
  double gain_;
};

class InstanceNorm final : public Layer {
 public:
  explicit InstanceNorm(int channels) : c_(channels) {}
  nlohmann::json describe() const override { return {{"type", "instance_norm"}, {"channels", c_}}; }
  std::size_t param_count() const override { return static_cast<std::size_t>(2 * c_); }
  void init(double* p, std::mt19937_64&) const override {
    std::fill(p, p + c_, 1.0);
    std::fill(p + c_, p + 2 * c_, 0.0);
  }
  Matrix forward(const double* p, const Matrix& x) const override {
    return instance_norm_forward(x, Eigen::Map<const Eigen::RowVectorXd>(p, c_),
                                 Eigen::Map<const Eigen::RowVectorXd>(p + c_, c_));
  }
  Matrix backward(const double* p, const Matrix& x, const Matrix&, const Matrix& dy, double* dp) const override {
    Eigen::RowVectorXd dg = Eigen::RowVectorXd::Zero(c_);
    Eigen::RowVectorXd ds = Eigen::RowVectorXd::Zero(c_);
    Matrix dx = instance_norm_backward(x, Eigen::Map<const Eigen::RowVectorXd>(p, c_), dy, dg, ds);
    Eigen::Map<Eigen::RowVectorXd>(dp, c_) += dg;
    Eigen::Map<Eigen::RowVectorXd>(dp + c_, c_) += ds;
    return dx;
  }

 private:
  int c_;
};

class LeakyRelu final : public Layer {
 public:
  explicit LeakyRelu(double slope) : slope_(slope) {}
  nlohmann::json describe() const override { return {{"type", "leaky_relu"}, {"slope", slope_}}; }
  Matrix forward(const double*, const Matrix& x) const override { return leaky_relu_forward(x, slope_); }
  Matrix backward(const double*, const Matrix& x, const Matrix&, const Matrix& dy, double*) const override {
    return leaky_relu_backward(x, dy, slope_);
  }

 private:
  double slope_;
};

class Pool final : public Layer {
 public:
  Pool(std::shared_ptr<const Geometry> geo, int level, PoolMode mode) : geo_(std::move(geo)), level_(level), mode_(mode) {
    require(level >= 2, ErrorCode::invalid_parameter, "pool input level must be >= 2");
  }
  nlohmann::json describe() const override { return {{"type", "pool"}, {"level", level_}, {"mode", to_string(mode_)}}; }
  Matrix forward(const double*, const Matrix& x) const override {
    return pool_forward(geo_->hierarchy, level_, x, mode_);
  }
  Matrix backward(const double*, const Matrix& x, const Matrix&, const Matrix& dy, double*) const override {
    return pool_backward(geo_->hierarchy, level_, x, dy, mode_);
  }

 private:
  std::shared_ptr<const Geometry> geo_;
  int level_;
  PoolMode mode_;
};

class Upsample final : public Layer {
 public:
  Upsample(std::shared_ptr<const Geometry> geo, int level) : geo_(std::move(geo)), level_(level) {}
  nlohmann::json describe() const override { return {{"type", "upsample"}, {"level", level_}}; }
  Matrix forward(const double*, const Matrix& x) const override { return geo_->upsampler(level_).forward(x); }
  Matrix backward(const double*, const Matrix&, const Matrix&, const Matrix& dy, double*) const override {
    return geo_->upsampler(level_).backward(dy);
  }

 private:
  std::shared_ptr<const Geometry> geo_;
  int level_;
};

class Linear final : public Layer {
 public:
  Linear(std::size_t in, std::size_t out, double init_std) : in_(in), out_(out), init_std_(init_std) {}
  nlohmann::json describe() const override { return {{"type", "linear"}, {"in", in_}, {"out", out_}}; }
  std::size_t param_count() const override { return in_ * out_ + out_; }
  void init(double* p, std::mt19937_64& rng) const override {
    fill_normal(p, in_ * out_, init_std_, rng);
    std::fill(p + in_ * out_, p + param_count(), 0.0);
  }
  Matrix forward(const double* p, const Matrix& x) const override {
    require(static_cast<std::size_t>(x.size()) == in_, ErrorCode::shape_mismatch, "linear: input size");
    const Eigen::Map<const Matrix> w(p, static_cast<Index>(out_), static_cast<Index>(in_));
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), x.size());
    Matrix y(1, static_cast<Index>(out_));
    y.row(0) = (w * v).transpose() + Eigen::Map<const Eigen::RowVectorXd>(p + in_ * out_, static_cast<Index>(out_));
    return y;
  }
  Matrix backward(const double* p, const Matrix& x, const Matrix&, const Matrix& dy, double* dp) const override {
    const Eigen::Map<const Matrix> w(p, static_cast<Index>(out_), static_cast<Index>(in_));
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), x.size());
    const Eigen::Map<const Eigen::VectorXd> g(dy.data(), dy.size());
    Eigen::Map<Matrix>(dp, static_cast<Index>(out_), static_cast<Index>(in_)).noalias() += g * v.transpose();
    Eigen::Map<Eigen::VectorXd>(dp + in_ * out_, static_cast<Index>(out_)) += g;
    Matrix dx(x.rows(), x.cols());
    Eigen::Map<Eigen::VectorXd>(dx.data(), dx.size()).noalias() = w.transpose() * g;
    return dx;
  }

 private:
  std::size_t in_;
  std::size_t out_;
  double init_std_;
};

class Reshape final : public Layer {
 public:
  Reshape(Index rows, Index cols) : rows_(rows), cols_(cols) {}
  nlohmann::json describe() const override { return {{"type", "reshape"}, {"rows", rows_}, {"cols", cols_}}; }
  Matrix forward(const double*, const Matrix& x) const override {
    require(x.size() == rows_ * cols_, ErrorCode::shape_mismatch, "reshape: size");
    return Eigen::Map<const Matrix>(x.data(), rows_, cols_);
  }
  Matrix backward(const double*, const Matrix& x, const Matrix&, const Matrix& dy, double*) const override {
    return Eigen::Map<const Matrix>(dy.data(), x.rows(), x.cols());
  }

 private:
  Index rows_;
  Index cols_;
};

}  // namespace

std::shared_ptr<const Geometry> make_geometry(GridHierarchy hierarchy, bool upsample_includes_parent) {
  auto geo = std::make_shared<Geometry>();
  geo->hierarchy = std::move(hierarchy);
  geo->upsample_includes_parent = upsample_includes_parent;
  for (int n = 2; n <= geo->hierarchy.levels(); ++n) geo->upsamplers.emplace_back(geo->hierarchy, n, upsample_includes_parent);
  geo->averaging = VertexAveraging(geo->hierarchy.finest(), geo->hierarchy.finest_incidence());
  return geo;
}

std::unique_ptr<Layer> make_conv(std::shared_ptr<const Geometry> geo, int level, int in, int out, double slope,
                                 double init_gain) {
  return std::make_unique<Conv>(std::move(geo), level, in, out, slope, init_gain);
}
std::unique_ptr<Layer> make_instance_norm(int channels) { return std::make_unique<InstanceNorm>(channels); }
std::unique_ptr<Layer> make_leaky_relu(double slope) { return std::make_unique<LeakyRelu>(slope); }
std::unique_ptr<Layer> make_pool(std::shared_ptr<const Geometry> geo, int level, PoolMode mode) {
  return std::make_unique<Pool>(std::move(geo), level, mode);
}
std::unique_ptr<Layer> make_upsample(std::shared_ptr<const Geometry> geo, int level) {
  return std::make_unique<Upsample>(std::move(geo), level);
}
std::unique_ptr<Layer> make_linear(std::size_t in, std::size_t out, double init_std) {
  return std::make_unique<Linear>(in, out, init_std);
}
std::unique_ptr<Layer> make_reshape(Index rows, Index cols) { return std::make_unique<Reshape>(rows, cols); }

void Sequential::add(std::unique_ptr<Layer> layer) {
  offsets_.push_back(offsets_.back() + layer->param_count());
  layers_.push_back(std::move(layer));
}

Eigen::VectorXd Sequential::init(std::uint64_t seed) const {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Index>(param_count()));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->init(p.data() + offsets_[i], rng);
  return p;
}

Matrix Sequential::forward(const Eigen::VectorXd& params, const Matrix& x, Tape* tape) const {
  require(static_cast<std::size_t>(params.size()) == param_count(), ErrorCode::shape_mismatch,
          "parameter vector length does not match the network");
  if (tape) {
    tape->acts.clear();
    tape->acts.reserve(layers_.size() + 1);
    tape->acts.push_back(x);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      tape->acts.push_back(layers_[i]->forward(params.data() + offsets_[i], tape->acts.back()));
    }
    return tape->acts.back();
  }
  Matrix cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) cur = layers_[i]->forward(params.data() + offsets_[i], cur);
  return cur;
}

Matrix Sequential::backward(const Eigen::VectorXd& params, const Tape& tape, const Matrix& dy,
                            Eigen::VectorXd& grad) const {
  require(tape.acts.size() == layers_.size() + 1, ErrorCode::shape_mismatch, "tape does not match the network");
  require(grad.size() == params.size(), ErrorCode::shape_mismatch, "gradient vector length");
  Matrix g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(params.data() + offsets_[i], tape.acts[i], tape.acts[i + 1], g, grad.data() + offsets_[i]);
  }
  return g;
}

nlohmann::json Sequential::describe() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& l : layers_) j.push_back(l->describe());
  return j;
}

}  // namespace tetfield
