#pragma once

// JSON-backed settings shared by every subcommand. Unknown keys are errors.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "tetfield/neuralmodel.hpp"
#include "tetfield/surfacex.hpp"

namespace tetfield::cli {

struct GridSection {
  int m = 5;
  int levels = 3;
};

struct TrainSection {
  int epochs = 100;
  int batch = 30;
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  int latent = 64;
  int base_width = 16;
  int local_critic_width = 16;
  int encoder_convs = 4;
  int decoder_convs = 4;
  int critic_convs = 3;
  double lambda_d = 1.0;
  double lambda_kl = 1e-3;
  int n_critic = 5;
  double lambda_gp = 10.0;
  std::string mode = "both";
  std::uint64_t seed = 0;
  long max_steps = 0;
  double max_seconds = 0.0;
  int checkpoint_every = 0;
  std::string schedule = "constant";
  double final_lr_scale = 0.01;
};

struct ExtractSection {
  double tau = 0.5;
  double beta = 0.5;
  double gamma = kDefaultGamma;
  int smooth_iters = 1;
  bool filter = true;
};

struct PathsSection {
  std::string grid;
  std::string data;
  std::string model;
  std::string log;
};

struct Config {
  GridSection grid;
  TrainSection train;
  ExtractSection extract;
  PathsSection paths;

  ArchConfig arch() const;
  TrainConfig train_config() const;
  ExtractOptions extract_options(double mu) const;
  void check() const;
};

void to_json(nlohmann::json& j, const Config& c);
/// Overlays `j` onto `c`; throws parse_error on unknown keys or wrong types.
void merge_json(const nlohmann::json& j, Config& c);
Config load_config(const std::string& path);

}  // namespace tetfield::cli
