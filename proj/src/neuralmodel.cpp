#include "tetfield/neuralmodel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>

#include "binary_io.hpp"

namespace tetfield {

namespace {

using Eigen::Index;

constexpr std::uint32_t kCheckpointVersion = 1;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void check_finite(double v, const char* what) {
  require(std::isfinite(v), ErrorCode::numeric_error, std::string("non-finite ") + what);
}

}  // namespace

void to_json(nlohmann::json& j, const ArchConfig& a) {
  j = nlohmann::json{{"latent", a.latent},
                     {"base_width", a.base_width},
                     {"encoder_convs", a.encoder_convs},
                     {"decoder_convs", a.decoder_convs},
                     {"critic_convs", a.critic_convs},
                     {"local_critic_width", a.local_critic_width},
                     {"pool", to_string(a.pool)},
                     {"leaky_slope", a.leaky_slope},
                     {"output_init_gain", a.output_init_gain}};
}

void from_json(const nlohmann::json& j, ArchConfig& a) {
  a = ArchConfig{};
  for (const auto& [key, value] : j.items()) {
    if (key == "latent") a.latent = value.get<int>();
    else if (key == "base_width") a.base_width = value.get<int>();
    else if (key == "encoder_convs") a.encoder_convs = value.get<int>();
    else if (key == "decoder_convs") a.decoder_convs = value.get<int>();
    else if (key == "critic_convs") a.critic_convs = value.get<int>();
    else if (key == "local_critic_width") a.local_critic_width = value.get<int>();
    else if (key == "pool") a.pool = pool_mode_from_string(value.get<std::string>());
    else if (key == "leaky_slope") a.leaky_slope = value.get<double>();
    else if (key == "output_init_gain") a.output_init_gain = value.get<double>();
    else fail(ErrorCode::parse_error, "unknown architecture key '" + key + "'");
  }
}

nlohmann::json Model::describe() const {
  const TetGrid& coarse = geo->hierarchy.level(1);
  return {{"grid", {{"m", coarse.base_cubes}, {"levels", geo->hierarchy.levels()}}},
          {"upsample_includes_parent", geo->upsample_includes_parent},
          {"arch", arch},
          {"params",
           {{"encoder", enc.size()}, {"decoder", dec.size()}, {"local_critic", local.size()}, {"global_critic", global.size()}}},
          {"layers",
           {{"encoder", encoder.describe()},
            {"decoder", decoder.describe()},
            {"local_critic", local_critic.describe()},
            {"global_critic", global_critic.describe()}}}};
}

Model build_model(std::shared_ptr<const Geometry> geo, const ArchConfig& arch, std::uint64_t seed) {
  require(arch.latent >= 1 && arch.base_width >= 1, ErrorCode::invalid_parameter, "latent and width must be positive");
  require(arch.encoder_convs >= 1 && arch.decoder_convs >= 1 && arch.critic_convs >= 1, ErrorCode::invalid_parameter,
          "every block needs at least one convolution");
  const int N = geo->hierarchy.levels();
  const double slope = arch.leaky_slope;
  const auto K1 = static_cast<Index>(geo->hierarchy.level(1).num_tets());
  Model m;
  m.arch = arch;
  m.geo = geo;
  auto w = [&](int n) { return arch.width(n, N); };

  int channels = kFieldChannels;
  for (int n = N; n >= 1; --n) {
    for (int i = 0; i < arch.encoder_convs; ++i) {
      m.encoder.add(make_conv(geo, n, channels, w(n), slope));
      m.encoder.add(make_instance_norm(w(n)));
      m.encoder.add(make_leaky_relu(slope));
      channels = w(n);
    }
    if (n > 1) m.encoder.add(make_pool(geo, n, arch.pool));
  }
  const auto flat1 = static_cast<std::size_t>(K1 * w(1));
  m.encoder.add(make_linear(flat1, static_cast<std::size_t>(2 * arch.latent), 1.0 / std::sqrt(static_cast<double>(flat1))));

  m.decoder.add(make_linear(static_cast<std::size_t>(arch.latent), flat1, 1.0 / std::sqrt(static_cast<double>(arch.latent))));
  m.decoder.add(make_reshape(K1, w(1)));
  m.decoder.add(make_instance_norm(w(1)));
  m.decoder.add(make_leaky_relu(slope));
  channels = w(1);
  for (int n = 1; n <= N; ++n) {
    if (n > 1) m.decoder.add(make_upsample(geo, n));
    for (int i = 0; i < arch.decoder_convs; ++i) {
      m.decoder.add(make_conv(geo, n, channels, w(n), slope));
      m.decoder.add(make_instance_norm(w(n)));
      m.decoder.add(make_leaky_relu(slope));
      channels = w(n);
    }
  }
  m.decoder.add(make_conv(geo, N, channels, kFieldChannels, slope, arch.output_init_gain));

  const int lw = arch.local_critic_width;
  m.local_critic.add(make_conv(geo, N, kFieldChannels, lw, slope));
  m.local_critic.add(make_leaky_relu(slope));
  m.local_critic.add(make_conv(geo, N, lw, lw, slope));
  m.local_critic.add(make_leaky_relu(slope));
  m.local_critic.add(make_conv(geo, N, lw, 1, slope));

  channels = kFieldChannels;
  for (int n = N; n >= 1; --n) {
    for (int i = 0; i < arch.critic_convs; ++i) {
      m.global_critic.add(make_conv(geo, n, channels, w(n), slope));
      m.global_critic.add(make_leaky_relu(slope));
      channels = w(n);
    }
    if (n > 1) m.global_critic.add(make_pool(geo, n, arch.pool));
  }
  m.global_critic.add(make_linear(flat1, 1, 1.0 / std::sqrt(static_cast<double>(flat1))));

  m.enc = m.encoder.init(mix_seed(seed, 1));
  m.dec = m.decoder.init(mix_seed(seed, 2));
  m.local = m.local_critic.init(mix_seed(seed, 3));
  m.global = m.global_critic.init(mix_seed(seed, 4));
  return m;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix fields_to_tensor(const FieldSet& f) {
  require(f.tet_deformation.size() == f.num_tets(), ErrorCode::shape_mismatch, "field set tet deformation length");
  Matrix x(static_cast<Index>(f.num_tets()), kFieldChannels);
  for (std::size_t k = 0; k < f.num_tets(); ++k) {
    const auto r = static_cast<Index>(k);
    x(r, 0) = f.occupancy[k];
    x(r, 1) = f.tet_deformation[k].x();
    x(r, 2) = f.tet_deformation[k].y();
    x(r, 3) = f.tet_deformation[k].z();
  }
  return x;
}

Matrix raw_to_tensor(const Matrix& raw) {
  Matrix x = raw;
  for (Index r = 0; r < x.rows(); ++r) x(r, 0) = sigmoid(raw(r, 0));
  return x;
}

LatentStats encode(const Model& model, const Matrix& input, Sequential::Tape* tape) {
  require(input.cols() == kFieldChannels, ErrorCode::shape_mismatch, "encoder input must have 4 channels");
  require_finite(input, "encoder input");
  const Matrix out = model.encoder.forward(model.enc, input, tape);
  const Index L = model.arch.latent;
  LatentStats s;
  s.mu = out.row(0).segment(0, L).transpose();
  s.logvar = out.row(0).segment(L, L).transpose();
  return s;
}

Eigen::VectorXd reparameterize(const LatentStats& stats, std::uint64_t seed, Eigen::VectorXd* eta) {
  require(stats.mu.size() == stats.logvar.size(), ErrorCode::shape_mismatch, "mu and logvar lengths differ");
  const Eigen::VectorXd e = sample_latent(static_cast<int>(stats.mu.size()), seed);
  if (eta) *eta = e;
  return stats.mu + (0.5 * stats.logvar.array()).exp().matrix().cwiseProduct(e);
}

Matrix decode_raw(const Model& model, const Eigen::VectorXd& z, Sequential::Tape* tape) {
  require(z.size() == model.arch.latent, ErrorCode::shape_mismatch, "latent code length");
  require(z.allFinite(), ErrorCode::numeric_error, "latent code is not finite");
  Matrix zin(1, z.size());
  zin.row(0) = z.transpose();
  return model.decoder.forward(model.dec, zin, tape);
}

FieldSet raw_to_fields(const Model& model, const Matrix& raw) {
  const TetGrid& g = model.geo->hierarchy.finest();
  FieldSet f;
  f.base_cubes = g.base_cubes;
  f.level = g.level;
  f.occupancy.resize(static_cast<std::size_t>(raw.rows()));
  f.tet_deformation.resize(static_cast<std::size_t>(raw.rows()));
  for (Index r = 0; r < raw.rows(); ++r) {
    f.occupancy[static_cast<std::size_t>(r)] = sigmoid(raw(r, 0));
    f.tet_deformation[static_cast<std::size_t>(r)] = Vec3(raw(r, 1), raw(r, 2), raw(r, 3));
  }
  f.vertex_deformation = model.geo->averaging.apply(f.tet_deformation);
  return f;
}

FieldSet decode(const Model& model, const Eigen::VectorXd& z) { return raw_to_fields(model, decode_raw(model, z)); }

double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
  return -0.5 * (1.0 + logvar.array() - mu.array().square() - logvar.array().exp()).sum();
}

VaeLoss vae_loss(const Matrix& raw, const FieldSet& target, const LatentStats& stats, const LossWeights& w,
                 const VertexAveraging& averaging) {
  const Index K = raw.rows();
  require(raw.cols() == kFieldChannels, ErrorCode::shape_mismatch, "decoder output must have 4 channels");
  require(static_cast<std::size_t>(K) == target.num_tets(), ErrorCode::shape_mismatch, "target occupancy length");
  require(target.num_vertices() == averaging.num_vertices(), ErrorCode::shape_mismatch, "target vertex count");
  require_finite(raw, "decoder output");
  require(stats.mu.allFinite() && stats.logvar.allFinite(), ErrorCode::numeric_error, "latent statistics not finite");

  VaeLoss L;
  L.d_raw = Matrix::Zero(K, kFieldChannels);
  CompensatedSum bce;
  for (Index k = 0; k < K; ++k) {
    const double l = raw(k, 0);
    const double t = target.occupancy[static_cast<std::size_t>(k)];
    bce.add(softplus(l) - t * l);
    L.d_raw(k, 0) = (sigmoid(l) - t) / static_cast<double>(K);
  }
  L.bce = bce.value() / static_cast<double>(K);

  const Matrix def = raw.rightCols(3);
  const Eigen::MatrixXd pred = averaging.apply(Eigen::MatrixXd(def));
  Eigen::MatrixXd diff(pred.rows(), 3);
  for (Index v = 0; v < pred.rows(); ++v) {
    diff.row(v) = pred.row(v) - target.vertex_deformation[static_cast<std::size_t>(v)].transpose();
  }
  const double n = static_cast<double>(diff.size());
  L.mse = diff.squaredNorm() / n;
  L.d_raw.rightCols(3) = w.lambda_d * averaging.apply_transpose((2.0 / n) * diff);

  L.kl = kl_divergence(stats.mu, stats.logvar);
  L.d_mu = w.lambda_kl * stats.mu;
  L.d_logvar = w.lambda_kl * (-0.5) * (1.0 - stats.logvar.array().exp()).matrix();
  L.total = L.bce + w.lambda_d * L.mse + w.lambda_kl * L.kl;
  return L;
}

double critic_score(const Sequential& critic, const Eigen::VectorXd& params, const Matrix& x) {
  return critic.forward(params, x).mean();
}

Matrix critic_input_gradient(const Sequential& critic, const Eigen::VectorXd& params, const Matrix& x,
                             Eigen::VectorXd* grad, double scale) {
  Sequential::Tape tape;
  const Matrix out = critic.forward(params, x, &tape);
  const Matrix dy = Matrix::Constant(out.rows(), out.cols(), scale / static_cast<double>(out.size()));
  Eigen::VectorXd scratch;
  Eigen::VectorXd* g = grad;
  if (!g) {
    scratch = Eigen::VectorXd::Zero(params.size());
    g = &scratch;
  }
  Matrix dx = critic.backward(params, tape, dy, *g);
  if (scale != 0.0) dx /= scale;
  return dx;
}

CriticTerms wgan_gp_sample(const Sequential& critic, const Eigen::VectorXd& params, const Matrix& real,
                           const Matrix& fake, double eps, double lambda_gp, Eigen::VectorXd& grad, double scale,
                           double step) {
  require(real.rows() == fake.rows() && real.cols() == fake.cols(), ErrorCode::shape_mismatch,
          "real and fake tensors differ in shape");
  CriticTerms t;
  Sequential::Tape tape;

  Matrix out = critic.forward(params, fake, &tape);
  t.fake = out.mean();
  critic.backward(params, tape, Matrix::Constant(out.rows(), out.cols(), scale / static_cast<double>(out.size())), grad);

  out = critic.forward(params, real, &tape);
  t.real = out.mean();
  critic.backward(params, tape, Matrix::Constant(out.rows(), out.cols(), -scale / static_cast<double>(out.size())), grad);

  const Matrix x_hat = eps * real + (1.0 - eps) * fake;
  const Matrix g = critic_input_gradient(critic, params, x_hat);
  t.grad_norm = g.norm();
  t.penalty = lambda_gp * (t.grad_norm - 1.0) * (t.grad_norm - 1.0);
  if (lambda_gp != 0.0 && t.grad_norm > 0.0) {
    const Matrix dir = g / t.grad_norm;
    const double coef = scale * 2.0 * lambda_gp * (t.grad_norm - 1.0) / (2.0 * step);
    critic_input_gradient(critic, params, x_hat + step * dir, &grad, coef);
    critic_input_gradient(critic, params, x_hat - step * dir, &grad, -coef);
  }
  t.loss = t.fake - t.real + t.penalty;
  check_finite(t.loss, "critic loss");
  return t;
}

AdamState make_adam(std::size_t n, const AdamConfig& config) {
  require(config.lr > 0.0, ErrorCode::invalid_parameter, "learning rate must be positive");
  require(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0,
          ErrorCode::invalid_parameter, "Adam betas must lie in [0, 1)");
  AdamState s;
  s.config = config;
  s.m = Eigen::VectorXd::Zero(static_cast<Index>(n));
  s.v = Eigen::VectorXd::Zero(static_cast<Index>(n));
  return s;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& s) {
  require(params.size() == grad.size() && grad.size() == s.m.size(), ErrorCode::shape_mismatch,
          "Adam parameter, gradient and state sizes differ");
  const auto& c = s.config;
  ++s.step;
  s.m = c.beta1 * s.m + (1.0 - c.beta1) * grad;
  s.v = c.beta2 * s.v + (1.0 - c.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  params.array() -= c.lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + c.eps);
}

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::vae: return "vae";
    case TrainMode::gan: return "gan";
    case TrainMode::both: return "both";
  }
  return "both";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "vae") return TrainMode::vae;
  if (name == "gan") return TrainMode::gan;
  if (name == "both") return TrainMode::both;
  fail(ErrorCode::invalid_parameter, "unknown training mode '" + name + "' (vae|gan|both)");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  // splitmix64 folded over the inputs
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (std::uint64_t v : {a, b, c, d}) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    h ^= h >> 31;
  }
  return h;
}

Eigen::VectorXd sample_latent(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Eigen::VectorXd z(dim);
  for (int i = 0; i < dim; ++i) z[i] = n(rng);
  return z;
}

Eigen::VectorXd lerp(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t) {
  require(a.size() == b.size(), ErrorCode::shape_mismatch, "lerp: latent lengths differ");
  return (1.0 - t) * a + t * b;
}

Eigen::VectorXd arith(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  require(a.size() == b.size() && b.size() == c.size(), ErrorCode::shape_mismatch, "arith: latent lengths differ");
  return a - b + c;
}

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  require(window >= 1, ErrorCode::invalid_parameter, "smoothing window must be >= 1");
  std::vector<double> out;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out.push_back(sum / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

namespace {

// One VAE sample with explicit parameters; eta is the reparameterization noise.
// Adds scale * dL/dparams into the gradients.
VaeLoss vae_sample(const Model& m, const Eigen::VectorXd& enc, const Eigen::VectorXd& dec, const Matrix& input,
                   const FieldSet& target, const Eigen::VectorXd& eta, const LossWeights& w, double scale,
                   Eigen::VectorXd& g_enc, Eigen::VectorXd& g_dec) {
  const Index L = m.arch.latent;
  Sequential::Tape enc_tape, dec_tape;
  const Matrix out = m.encoder.forward(enc, input, &enc_tape);
  LatentStats stats{out.row(0).segment(0, L).transpose(), out.row(0).segment(L, L).transpose()};
  const Eigen::VectorXd sd = (0.5 * stats.logvar.array()).exp();
  const Eigen::VectorXd z = stats.mu + sd.cwiseProduct(eta);
  Matrix zin(1, L);
  zin.row(0) = z.transpose();
  const Matrix raw = m.decoder.forward(dec, zin, &dec_tape);
  VaeLoss loss = vae_loss(raw, target, stats, w, m.geo->averaging);
  const Matrix dz = m.decoder.backward(dec, dec_tape, loss.d_raw * scale, g_dec);
  Matrix d_out(1, 2 * L);
  d_out.row(0).segment(0, L) = (loss.d_mu * scale + dz.row(0).transpose()).transpose();
  d_out.row(0).segment(L, L) =
      (loss.d_logvar * scale + dz.row(0).transpose().cwiseProduct(eta).cwiseProduct(0.5 * sd)).transpose();
  m.encoder.backward(enc, enc_tape, d_out, g_enc);
  return loss;
}

// Generator loss -(local + global score) of decode(z); adds scale * dloss/ddec into g_dec.
double generator_sample(const Model& m, const Eigen::VectorXd& dec, const Eigen::VectorXd& z, double scale,
                        Eigen::VectorXd& g_dec) {
  Sequential::Tape tape;
  Matrix zin(1, z.size());
  zin.row(0) = z.transpose();
  const Matrix raw = m.decoder.forward(dec, zin, &tape);
  const Matrix fake = raw_to_tensor(raw);
  const double loss = -(critic_score(m.local_critic, m.local, fake) + critic_score(m.global_critic, m.global, fake));
  Matrix dfake = -(critic_input_gradient(m.local_critic, m.local, fake) +
                   critic_input_gradient(m.global_critic, m.global, fake)) * scale;
  for (Index r = 0; r < raw.rows(); ++r) dfake(r, 0) *= fake(r, 0) * (1.0 - fake(r, 0));
  m.decoder.backward(dec, tape, dfake, g_dec);
  return loss;
}

}  // namespace

const char* to_string(LrSchedule schedule) { return schedule == LrSchedule::cosine ? "cosine" : "constant"; }

LrSchedule lr_schedule_from_string(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "cosine") return LrSchedule::cosine;
  fail(ErrorCode::invalid_parameter, "unknown learning-rate schedule '" + name + "'");
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  if (cfg.schedule == LrSchedule::constant || cfg.epochs <= 1) return cfg.adam.lr;
  const double t = std::clamp(static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1), 0.0, 1.0);
  const double s = cfg.final_lr_scale;
  return cfg.adam.lr * (s + (1.0 - s) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

TrainResult train(Model& model, const std::vector<FieldSet>& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  require(!data.empty(), ErrorCode::empty_input, "training needs at least one shape");
  require(cfg.batch >= 1 && cfg.epochs >= 0 && cfg.n_critic >= 1, ErrorCode::invalid_parameter,
          "batch, epochs and n_critic must be positive");
  require(cfg.final_lr_scale > 0.0 && cfg.final_lr_scale <= 1.0, ErrorCode::invalid_parameter,
          "final_lr_scale must be in (0, 1]");
  const TetGrid& finest = model.geo->hierarchy.finest();
  for (const auto& f : data) {
    require(f.num_tets() == finest.num_tets() && f.num_vertices() == finest.num_vertices(), ErrorCode::shape_mismatch,
            "training fields do not match the model grid");
  }
  const bool do_vae = cfg.mode != TrainMode::gan;
  const bool do_gan = cfg.mode != TrainMode::vae;
  const auto clock_start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count(); };

  AdamState vae_enc = make_adam(static_cast<std::size_t>(model.enc.size()), cfg.adam);
  AdamState vae_dec = make_adam(static_cast<std::size_t>(model.dec.size()), cfg.adam);
  AdamState gen = make_adam(static_cast<std::size_t>(model.dec.size()), cfg.adam);
  AdamState opt_local = make_adam(static_cast<std::size_t>(model.local.size()), cfg.adam);
  AdamState opt_global = make_adam(static_cast<std::size_t>(model.global.size()), cfg.adam);

  std::vector<Matrix> inputs;
  inputs.reserve(data.size());
  for (const auto& f : data) {
    inputs.push_back(fields_to_tensor(f));
    require_finite(inputs.back(), "training fields");
  }

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5eed));

  auto abort_numeric = [&](const std::string& what) {
    if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path + ".diverged");
    if (!cfg.log_path.empty()) write_train_log(result.log, cfg.log_path);
    fail(ErrorCode::numeric_error, "training diverged: " + what);
  };

  for (int epoch = 0; epoch < cfg.epochs && !result.hit_limit; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch);
    for (AdamState* s : {&vae_enc, &vae_dec, &gen, &opt_local, &opt_global}) s->config.lr = lr;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_recon = 0.0;
    std::size_t epoch_samples = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      TrainRecord rec;
      rec.step = result.steps;
      rec.epoch = epoch;

      if (do_vae) {
        Eigen::VectorXd g_enc = Eigen::VectorXd::Zero(model.enc.size());
        Eigen::VectorXd g_dec = Eigen::VectorXd::Zero(model.dec.size());
        for (std::size_t b = start; b < end; ++b) {
          const std::size_t i = order[b];
          Eigen::VectorXd eta = sample_latent(model.arch.latent, mix_seed(cfg.seed, 1, static_cast<std::uint64_t>(result.steps), i));
          VaeLoss loss;
          try {
            loss = vae_sample(model, model.enc, model.dec, inputs[i], data[i], eta, cfg.weights, inv_b, g_enc, g_dec);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::numeric_error) throw;
            abort_numeric(e.what());
          }
          if (!std::isfinite(loss.total)) abort_numeric("VAE loss");
          rec.bce += loss.bce * inv_b;
          rec.mse += loss.mse * inv_b;
          rec.kl += loss.kl * inv_b;
          rec.vae += loss.total * inv_b;
          epoch_recon += loss.bce + cfg.weights.lambda_d * loss.mse;
          ++epoch_samples;
        }
        if (!g_enc.allFinite() || !g_dec.allFinite()) abort_numeric("VAE gradient");
        adam_step(model.enc, g_enc, vae_enc);
        adam_step(model.dec, g_dec, vae_dec);
      }

      if (do_gan) {
        for (int c = 0; c < cfg.n_critic; ++c) {
          Eigen::VectorXd g_local = Eigen::VectorXd::Zero(model.local.size());
          Eigen::VectorXd g_global = Eigen::VectorXd::Zero(model.global.size());
          double lsum = 0.0, gsum = 0.0, psum = 0.0;
          for (std::size_t b = start; b < end; ++b) {
            const std::size_t i = order[b];
            const auto base = mix_seed(cfg.seed, 2, static_cast<std::uint64_t>(result.steps), (static_cast<std::uint64_t>(c) << 32) | i);
            const Matrix fake = raw_to_tensor(decode_raw(model, sample_latent(model.arch.latent, base)));
            std::mt19937_64 eps_rng(mix_seed(base, 7));
            const double eps = std::uniform_real_distribution<double>(0.0, 1.0)(eps_rng);
            const CriticTerms tl = wgan_gp_sample(model.local_critic, model.local, inputs[i], fake, eps, cfg.lambda_gp, g_local, inv_b);
            const CriticTerms tg = wgan_gp_sample(model.global_critic, model.global, inputs[i], fake, eps, cfg.lambda_gp, g_global, inv_b);
            lsum += tl.loss * inv_b;
            gsum += tg.loss * inv_b;
            psum += (tl.penalty + tg.penalty) * inv_b;
          }
          if (!std::isfinite(lsum) || !std::isfinite(gsum) || !g_local.allFinite() || !g_global.allFinite()) {
            abort_numeric("critic loss");
          }
          adam_step(model.local, g_local, opt_local);
          adam_step(model.global, g_global, opt_global);
          rec.critic_local = lsum;
          rec.critic_global = gsum;
          rec.penalty = psum;
        }
        Eigen::VectorXd g_gen = Eigen::VectorXd::Zero(model.dec.size());
        double gen_loss = 0.0;
        for (std::size_t b = start; b < end; ++b) {
          const auto seed = mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(result.steps), order[b]);
          gen_loss += generator_sample(model, model.dec, sample_latent(model.arch.latent, seed), inv_b, g_gen) * inv_b;
        }
        if (!std::isfinite(gen_loss) || !g_gen.allFinite()) abort_numeric("generator loss");
        adam_step(model.dec, g_gen, gen);
        rec.generator = gen_loss;
      }

      result.log.push_back(rec);
      ++result.steps;
      if ((cfg.max_steps > 0 && result.steps >= cfg.max_steps) || (cfg.max_seconds > 0.0 && elapsed() >= cfg.max_seconds)) {
        result.hit_limit = true;
        break;
      }
    }
    if (epoch_samples > 0) result.epoch_reconstruction.push_back(epoch_recon / static_cast<double>(epoch_samples));
    if (!result.hit_limit) result.epochs_completed = epoch + 1;
    if (on_epoch) on_epoch(epoch, epoch_samples ? epoch_recon / static_cast<double>(epoch_samples) : 0.0, elapsed());
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(model, cfg.checkpoint_path);
    }
  }
  result.seconds = elapsed();
  if (!cfg.log_path.empty()) write_train_log(result.log, cfg.log_path);
  if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
  return result;
}

void write_train_log(const std::vector<TrainRecord>& log, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot write training log: " + path);
  out << "step,epoch,bce,mse,kl,vae_total,critic_local,critic_global,penalty,generator\n";
  out << std::setprecision(10);
  for (const auto& r : log) {
    out << r.step << ',' << r.epoch << ',' << r.bce << ',' << r.mse << ',' << r.kl << ',' << r.vae << ','
        << r.critic_local << ',' << r.critic_global << ',' << r.penalty << ',' << r.generator << '\n';
  }
}

void save_checkpoint(const Model& model, const std::string& path, const nlohmann::json& extra) {
  nlohmann::json desc = model.describe();
  desc["extra"] = extra;
  const std::string blob = desc.dump();
  detail::BinaryWriter w(path);
  w.magic("TGAN");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(blob.size());
  w.put_bytes(blob);
  for (const Eigen::VectorXd* p : {&model.enc, &model.dec, &model.local, &model.global}) {
    std::vector<float> f(static_cast<std::size_t>(p->size()));
    for (Index i = 0; i < p->size(); ++i) f[static_cast<std::size_t>(i)] = static_cast<float>((*p)[i]);
    w.put<std::uint64_t>(f.size());
    w.put_array(f.data(), f.size());
  }
  w.finish();
}

Model load_checkpoint(const std::string& path, nlohmann::json* extra) {
  detail::BinaryReader r(path);
  r.expect_magic("TGAN");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::version_mismatch, path + ": checkpoint version " + std::to_string(version));
  }
  const auto len = r.get<std::uint64_t>();
  require(len < (std::uint64_t{1} << 30), ErrorCode::truncated_file, path + ": implausible descriptor length");
  const std::string blob = r.get_bytes(static_cast<std::size_t>(len));
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, path + ": bad descriptor: " + e.what());
  }
  const int m = desc.at("grid").at("m").get<int>();
  const int levels = desc.at("grid").at("levels").get<int>();
  auto geo = make_geometry(build_hierarchy(m, levels), desc.value("upsample_includes_parent", true));
  Model model = build_model(geo, desc.at("arch").get<ArchConfig>(), 0);
  for (Eigen::VectorXd* p : {&model.enc, &model.dec, &model.local, &model.global}) {
    const auto n = r.get<std::uint64_t>();
    require(n == static_cast<std::uint64_t>(p->size()), ErrorCode::shape_mismatch,
            path + ": parameter count does not match the architecture");
    std::vector<float> f(n);
    r.get_array(f.data(), n);
    for (std::size_t i = 0; i < n; ++i) (*p)[static_cast<Index>(i)] = f[i];
  }
  if (extra) *extra = desc.value("extra", nlohmann::json::object());
  return model;
}

}  // namespace tetfield

namespace tetfield {

namespace {

Eigen::VectorXd flat(const Matrix& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Matrix unflat(const Eigen::VectorXd& v, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

GradcheckCase sequential_case(const std::string& name, std::shared_ptr<const Model> m, const Sequential& net,
                              Matrix x, Eigen::VectorXd params) {
  const Index rows = x.rows(), cols = x.cols();
  GradcheckCase c;
  c.name = name;
  c.inputs = {flat(x), std::move(params)};
  c.forward = [m, &net, rows, cols](const std::vector<Eigen::VectorXd>& in) {
    return flat(net.forward(in[1], unflat(in[0], rows, cols)));
  };
  c.backward = [m, &net, rows, cols](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& up) {
    Sequential::Tape tape;
    const Matrix y = net.forward(in[1], unflat(in[0], rows, cols), &tape);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(in[1].size());
    const Matrix dx = net.backward(in[1], tape, unflat(up, y.rows(), y.cols()), g);
    return std::vector<Eigen::VectorXd>{flat(dx), g};
  };
  return c;
}

GradcheckCase critic_case(const std::string& name, std::shared_ptr<const Model> m, const Sequential& net,
                          Eigen::VectorXd params, Matrix real, Matrix fake, double eps, double lambda_gp) {
  GradcheckCase c;
  c.name = name;
  c.inputs = {std::move(params)};
  c.forward = [m, &net, real, fake, eps, lambda_gp](const std::vector<Eigen::VectorXd>& in) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(in[0].size());
    return Eigen::VectorXd::Constant(1, wgan_gp_sample(net, in[0], real, fake, eps, lambda_gp, g).loss);
  };
  c.backward = [m, &net, real, fake, eps, lambda_gp](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& up) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(in[0].size());
    wgan_gp_sample(net, in[0], real, fake, eps, lambda_gp, g, up[0]);
    return std::vector<Eigen::VectorXd>{g};
  };
  return c;
}

}  // namespace

std::vector<GradcheckCase> model_gradcheck_cases(std::uint64_t seed) {
  ArchConfig a;
  a.latent = 3;
  a.base_width = 2;
  a.encoder_convs = 2;
  a.decoder_convs = 2;
  a.critic_convs = 2;
  a.local_critic_width = 3;
  a.output_init_gain = 1.0;
  auto m = std::make_shared<Model>(build_model(make_geometry(build_hierarchy(1, 2)), a, seed));
  const Index K = static_cast<Index>(m->geo->hierarchy.finest().num_tets());
  const Index L = a.latent;

  std::mt19937_64 rng(mix_seed(seed, 11));
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.4);
  FieldSet target;
  target.base_cubes = 1;
  target.level = 2;
  for (Index k = 0; k < K; ++k) {
    target.occupancy.push_back(coin(rng) ? 1.0 : 0.0);
    target.tet_deformation.emplace_back(0.05 * normal(rng), 0.05 * normal(rng), 0.05 * normal(rng));
  }
  target.vertex_deformation = m->geo->averaging.apply(target.tet_deformation);
  const Matrix real = fields_to_tensor(target);
  Matrix raw(K, kFieldChannels);
  for (Index i = 0; i < raw.size(); ++i) raw.data()[i] = normal(rng);
  const Matrix fake = raw_to_tensor(raw);
  Matrix z(1, L);
  for (Index i = 0; i < L; ++i) z(0, i) = normal(rng);
  const Eigen::VectorXd eta = sample_latent(a.latent, mix_seed(seed, 12));
  LossWeights w;
  w.lambda_d = 3.0;
  w.lambda_kl = 0.1;

  std::vector<GradcheckCase> cases;
  cases.push_back(sequential_case("encoder", m, m->encoder, real, m->enc));
  cases.push_back(sequential_case("decoder", m, m->decoder, z, m->dec));
  cases.push_back(sequential_case("local_critic", m, m->local_critic, fake, m->local));
  cases.push_back(sequential_case("global_critic", m, m->global_critic, fake, m->global));

  {
    GradcheckCase c;
    c.name = "vae_loss";
    Eigen::VectorXd mu(L), lv(L);
    for (Index i = 0; i < L; ++i) {
      mu[i] = 0.5 * normal(rng);
      lv[i] = 0.5 * normal(rng);
    }
    c.inputs = {flat(raw), mu, lv};
    auto eval = [m, target, w, K](const std::vector<Eigen::VectorXd>& in) {
      return vae_loss(unflat(in[0], K, kFieldChannels), target, LatentStats{in[1], in[2]}, w, m->geo->averaging);
    };
    c.forward = [eval](const std::vector<Eigen::VectorXd>& in) { return Eigen::VectorXd::Constant(1, eval(in).total); };
    c.backward = [eval](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& up) {
      const VaeLoss l = eval(in);
      return std::vector<Eigen::VectorXd>{up[0] * flat(l.d_raw), up[0] * l.d_mu, up[0] * l.d_logvar};
    };
    cases.push_back(std::move(c));
  }
  {
    GradcheckCase c;
    c.name = "vae_end_to_end";
    c.inputs = {m->enc, m->dec};
    c.forward = [m, real, target, eta, w](const std::vector<Eigen::VectorXd>& in) {
      Eigen::VectorXd ge = Eigen::VectorXd::Zero(in[0].size()), gd = Eigen::VectorXd::Zero(in[1].size());
      return Eigen::VectorXd::Constant(1, vae_sample(*m, in[0], in[1], real, target, eta, w, 1.0, ge, gd).total);
    };
    c.backward = [m, real, target, eta, w](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& up) {
      Eigen::VectorXd ge = Eigen::VectorXd::Zero(in[0].size()), gd = Eigen::VectorXd::Zero(in[1].size());
      vae_sample(*m, in[0], in[1], real, target, eta, w, up[0], ge, gd);
      return std::vector<Eigen::VectorXd>{ge, gd};
    };
    cases.push_back(std::move(c));
  }
  cases.push_back(critic_case("local_critic_wgan_gp", m, m->local_critic, m->local, real, fake, 0.3, 10.0));
  cases.push_back(critic_case("global_critic_wgan_gp", m, m->global_critic, m->global, real, fake, 0.3, 10.0));
  {
    GradcheckCase c;
    c.name = "generator";
    c.inputs = {m->dec};
    const Eigen::VectorXd zv = z.row(0).transpose();
    c.forward = [m, zv](const std::vector<Eigen::VectorXd>& in) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(in[0].size());
      return Eigen::VectorXd::Constant(1, generator_sample(*m, in[0], zv, 1.0, g));
    };
    c.backward = [m, zv](const std::vector<Eigen::VectorXd>& in, const Eigen::VectorXd& up) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(in[0].size());
      generator_sample(*m, in[0], zv, up[0], g);
      return std::vector<Eigen::VectorXd>{g};
    };
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace tetfield
