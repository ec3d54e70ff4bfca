#pragma once

// Encoder, decoder and the two critics; VAE and WGAN-GP losses; Adam; the
// training loop; latent operations and checkpoints.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tetfield/layers.hpp"

namespace tetfield {

/// Occupancy plus per-tet deformation.
inline constexpr int kFieldChannels = 4;

struct ArchConfig {
  int latent = 64;
  int base_width = 16;  // channels at the finest level; doubles per coarser level
  int encoder_convs = 4;
  int decoder_convs = 4;
  int critic_convs = 3;  // per global-critic block
  int local_critic_width = 16;
  PoolMode pool = PoolMode::avg;
  double leaky_slope = kDefaultLeakySlope;
  double output_init_gain = 0.1;  // scales the initial weights of the last decoder conv

  int width(int level, int levels) const { return base_width << (levels - level); }
};

void to_json(nlohmann::json& j, const ArchConfig& a);
void from_json(const nlohmann::json& j, ArchConfig& a);

struct Model {
  ArchConfig arch;
  std::shared_ptr<const Geometry> geo;
  Sequential encoder;
  Sequential decoder;
  Sequential local_critic;
  Sequential global_critic;
  Eigen::VectorXd enc;
  Eigen::VectorXd dec;
  Eigen::VectorXd local;
  Eigen::VectorXd global;

  std::size_t param_count() const {
    return static_cast<std::size_t>(enc.size() + dec.size() + local.size() + global.size());
  }
  nlohmann::json describe() const;
};

Model build_model(std::shared_ptr<const Geometry> geo, const ArchConfig& arch, std::uint64_t seed);

/// K x 4 network input [occupancy, tet deformation].
Matrix fields_to_tensor(const FieldSet& fields);
/// Decoder output (logit, deformation) to critic input (probability, deformation).
Matrix raw_to_tensor(const Matrix& raw);
double sigmoid(double x);

struct LatentStats {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
};

LatentStats encode(const Model& model, const Matrix& input, Sequential::Tape* tape = nullptr);
/// z = mu + exp(logvar / 2) * eta with eta drawn from a seeded normal generator.
Eigen::VectorXd reparameterize(const LatentStats& stats, std::uint64_t seed, Eigen::VectorXd* eta = nullptr);
/// K x 4 raw output: occupancy logit then deformation.
Matrix decode_raw(const Model& model, const Eigen::VectorXd& z, Sequential::Tape* tape = nullptr);
/// Occupancy probabilities, tet deformation and averaged vertex deformation.
FieldSet decode(const Model& model, const Eigen::VectorXd& z);
FieldSet raw_to_fields(const Model& model, const Matrix& raw);

struct LossWeights {
  double lambda_d = 1.0;
  double lambda_kl = 1e-3;
};

double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

struct VaeLoss {
  double bce = 0.0;
  double mse = 0.0;
  double kl = 0.0;
  double total = 0.0;
  Matrix d_raw;  // dL/draw
  Eigen::VectorXd d_mu;
  Eigen::VectorXd d_logvar;  // KL part only; the reparameterization path is added by the caller
};

/// BCE on occupancy logits (mean over tets) + lambda_d * MSE on averaged vertex
/// deformation (mean over V x 3) + lambda_kl * KL.
VaeLoss vae_loss(const Matrix& raw, const FieldSet& target, const LatentStats& stats, const LossWeights& w,
                 const VertexAveraging& averaging);

/// Mean of all critic outputs.
double critic_score(const Sequential& critic, const Eigen::VectorXd& params, const Matrix& x);
/// d score / d x; adds scale * d score / d params into grad when grad is given.
Matrix critic_input_gradient(const Sequential& critic, const Eigen::VectorXd& params, const Matrix& x,
                             Eigen::VectorXd* grad = nullptr, double scale = 1.0);

struct CriticTerms {
  double fake = 0.0;
  double real = 0.0;
  double grad_norm = 0.0;
  double penalty = 0.0;  // lambda_gp * (|grad| - 1)^2
  double loss = 0.0;     // fake - real + penalty
};

inline constexpr double kPenaltyStep = 1e-4;

/// One sample of the WGAN-GP critic loss at x_hat = eps * real + (1 - eps) * fake.
/// Adds scale * dloss/dparams into grad. The penalty's parameter gradient is
/// 2 lambda (|g| - 1) times the central difference of grad_params score along
/// g / |g| with the given step.
CriticTerms wgan_gp_sample(const Sequential& critic, const Eigen::VectorXd& params, const Matrix& real,
                           const Matrix& fake, double eps, double lambda_gp, Eigen::VectorXd& grad, double scale = 1.0,
                           double step = kPenaltyStep);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

AdamState make_adam(std::size_t n, const AdamConfig& config);
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state);

enum class TrainMode { vae, gan, both };
const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

enum class LrSchedule { constant, cosine };
const char* to_string(LrSchedule schedule);
LrSchedule lr_schedule_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 100;
  int batch = 30;
  AdamConfig adam;
  LossWeights weights;
  int n_critic = 5;
  double lambda_gp = 10.0;
  TrainMode mode = TrainMode::both;
  LrSchedule schedule = LrSchedule::constant;
  double final_lr_scale = 0.01;  // cosine: lr at the last epoch relative to adam.lr
  std::uint64_t seed = 0;
  long max_steps = 0;        // 0 = no limit
  double max_seconds = 0.0;  // 0 = no limit
  std::string log_path;
  std::string checkpoint_path;
  int checkpoint_every = 0;  // epochs; 0 = only at the end
};

struct TrainRecord {
  long step = 0;
  int epoch = 0;
  double bce = 0.0;
  double mse = 0.0;
  double kl = 0.0;
  double vae = 0.0;
  double critic_local = 0.0;
  double critic_global = 0.0;
  double penalty = 0.0;
  double generator = 0.0;
};

struct TrainResult {
  std::vector<TrainRecord> log;
  std::vector<double> epoch_reconstruction;  // mean BCE + lambda_d * MSE per epoch
  long steps = 0;
  int epochs_completed = 0;
  double seconds = 0.0;
  bool hit_limit = false;
};

/// Learning rate used for every optimizer during `epoch`.
double scheduled_lr(const TrainConfig& config, int epoch);

using EpochCallback = std::function<void(int epoch, double reconstruction, double seconds)>;

/// Alternates a VAE step and a GAN step (n_critic critic updates then one
/// generator update) per minibatch. Throws numeric_error on a non-finite loss
/// after writing a checkpoint when a path is configured.
TrainResult train(Model& model, const std::vector<FieldSet>& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = nullptr);

void write_train_log(const std::vector<TrainRecord>& log, const std::string& path);

/// Trailing moving average with the given window.
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

Eigen::VectorXd sample_latent(int dim, std::uint64_t seed);
/// (1 - t) a + t b; exact at t = 0 and t = 1.
Eigen::VectorXd lerp(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t);
/// a - b + c.
Eigen::VectorXd arith(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0, std::uint64_t d = 0);

/// End-to-end cases on a miniature model (m=1, N=2, 2-3 channels): encoder,
/// decoder and both critics with respect to inputs and parameters, the VAE
/// loss, the full VAE sample, both WGAN-GP critic losses and the generator.
std::vector<GradcheckCase> model_gradcheck_cases(std::uint64_t seed);

/// "TGAN" checkpoint: architecture and grid descriptor as JSON, then f32
/// parameters. `extra` is stored alongside (e.g. the deformation filter scale).
void save_checkpoint(const Model& model, const std::string& path, const nlohmann::json& extra = nlohmann::json::object());
Model load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr);

}  // namespace tetfield
