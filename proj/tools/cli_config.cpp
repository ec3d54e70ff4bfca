#include "cli_config.hpp"

#include <fstream>

#include "tetfield/common.hpp"

namespace tetfield::cli {

using nlohmann::json;

namespace {

bool same_kind(const json& current, const json& incoming) {
  if (current.is_boolean()) return incoming.is_boolean();
  if (current.is_string()) return incoming.is_string();
  if (current.is_number_float()) return incoming.is_number();
  if (current.is_number()) return incoming.is_number_integer();
  if (current.is_object()) return incoming.is_object();
  return false;
}

void overlay(json& base, const json& patch, const std::string& where) {
  require(patch.is_object(), ErrorCode::parse_error, "config: '" + where + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    require(base.contains(key), ErrorCode::parse_error, "config: unknown key '" + path + "'");
    json& slot = base[key];
    require(same_kind(slot, value), ErrorCode::parse_error, "config: wrong type for '" + path + "'");
    if (slot.is_object()) overlay(slot, value, path);
    else slot = value;
  }
}

void from_tree(const json& j, Config& c) {
  const json& g = j.at("grid");
  c.grid.m = g.at("m").get<int>();
  c.grid.levels = g.at("levels").get<int>();

  const json& t = j.at("train");
  TrainSection& s = c.train;
  s.epochs = t.at("epochs").get<int>();
  s.batch = t.at("batch").get<int>();
  s.lr = t.at("lr").get<double>();
  s.beta1 = t.at("beta1").get<double>();
  s.beta2 = t.at("beta2").get<double>();
  s.latent = t.at("latent").get<int>();
  s.base_width = t.at("widths").at("base").get<int>();
  s.local_critic_width = t.at("widths").at("local_critic").get<int>();
  s.encoder_convs = t.at("convs").at("encoder").get<int>();
  s.decoder_convs = t.at("convs").at("decoder").get<int>();
  s.critic_convs = t.at("convs").at("critic").get<int>();
  s.lambda_d = t.at("lambda_d").get<double>();
  s.lambda_kl = t.at("lambda_kl").get<double>();
  s.n_critic = t.at("n_critic").get<int>();
  s.lambda_gp = t.at("lambda_gp").get<double>();
  s.mode = t.at("mode").get<std::string>();
  s.seed = t.at("seed").get<std::uint64_t>();
  s.max_steps = t.at("max_steps").get<long>();
  s.max_seconds = t.at("max_seconds").get<double>();
  s.checkpoint_every = t.at("checkpoint_every").get<int>();
  s.schedule = t.at("schedule").get<std::string>();
  s.final_lr_scale = t.at("final_lr_scale").get<double>();

  const json& e = j.at("extract");
  c.extract.tau = e.at("tau").get<double>();
  c.extract.beta = e.at("beta").get<double>();
  c.extract.gamma = e.at("gamma").get<double>();
  c.extract.smooth_iters = e.at("smooth_iters").get<int>();
  c.extract.filter = e.at("filter").get<bool>();

  const json& p = j.at("paths");
  c.paths.grid = p.at("grid").get<std::string>();
  c.paths.data = p.at("data").get<std::string>();
  c.paths.model = p.at("model").get<std::string>();
  c.paths.log = p.at("log").get<std::string>();
}

}  // namespace

void to_json(json& j, const Config& c) {
  const TrainSection& s = c.train;
  j = json{{"grid", {{"m", c.grid.m}, {"levels", c.grid.levels}}},
           {"train",
            {{"epochs", s.epochs},
             {"batch", s.batch},
             {"lr", s.lr},
             {"beta1", s.beta1},
             {"beta2", s.beta2},
             {"latent", s.latent},
             {"widths", {{"base", s.base_width}, {"local_critic", s.local_critic_width}}},
             {"convs", {{"encoder", s.encoder_convs}, {"decoder", s.decoder_convs}, {"critic", s.critic_convs}}},
             {"lambda_d", s.lambda_d},
             {"lambda_kl", s.lambda_kl},
             {"n_critic", s.n_critic},
             {"lambda_gp", s.lambda_gp},
             {"mode", s.mode},
             {"seed", s.seed},
             {"max_steps", s.max_steps},
             {"max_seconds", s.max_seconds},
             {"checkpoint_every", s.checkpoint_every},
             {"schedule", s.schedule},
             {"final_lr_scale", s.final_lr_scale}}},
           {"extract",
            {{"tau", c.extract.tau},
             {"beta", c.extract.beta},
             {"gamma", c.extract.gamma},
             {"smooth_iters", c.extract.smooth_iters},
             {"filter", c.extract.filter}}},
           {"paths",
            {{"grid", c.paths.grid}, {"data", c.paths.data}, {"model", c.paths.model}, {"log", c.paths.log}}}};
}

void merge_json(const json& j, Config& c) {
  json tree = c;
  overlay(tree, j, "");
  Config merged;
  from_tree(tree, merged);
  c = merged;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse_error, path + ": " + e.what());
  }
  Config c;
  merge_json(j, c);
  return c;
}

ArchConfig Config::arch() const {
  ArchConfig a;
  a.latent = train.latent;
  a.base_width = train.base_width;
  a.local_critic_width = train.local_critic_width;
  a.encoder_convs = train.encoder_convs;
  a.decoder_convs = train.decoder_convs;
  a.critic_convs = train.critic_convs;
  return a;
}

TrainConfig Config::train_config() const {
  TrainConfig t;
  t.epochs = train.epochs;
  t.batch = train.batch;
  t.adam.lr = train.lr;
  t.adam.beta1 = train.beta1;
  t.adam.beta2 = train.beta2;
  t.weights.lambda_d = train.lambda_d;
  t.weights.lambda_kl = train.lambda_kl;
  t.n_critic = train.n_critic;
  t.lambda_gp = train.lambda_gp;
  t.mode = train_mode_from_string(train.mode);
  t.seed = train.seed;
  t.max_steps = train.max_steps;
  t.max_seconds = train.max_seconds;
  t.log_path = paths.log;
  t.checkpoint_path = paths.model;
  t.checkpoint_every = train.checkpoint_every;
  t.schedule = lr_schedule_from_string(train.schedule);
  t.final_lr_scale = train.final_lr_scale;
  return t;
}

ExtractOptions Config::extract_options(double mu) const {
  ExtractOptions o;
  o.tau = extract.tau;
  o.beta = extract.beta;
  o.gamma = extract.gamma;
  o.smooth_iters = extract.smooth_iters;
  o.mu = extract.filter ? mu : 0.0;
  return o;
}

void Config::check() const {
  require(grid.m >= 1 && grid.levels >= 1, ErrorCode::invalid_parameter, "config: grid.m and grid.levels must be >= 1");
  require(train.epochs >= 1 && train.batch >= 1, ErrorCode::invalid_parameter,
          "config: train.epochs and train.batch must be >= 1");
  require(train.lr > 0.0, ErrorCode::invalid_parameter, "config: train.lr must be positive");
  require(train.beta1 >= 0.0 && train.beta1 < 1.0 && train.beta2 >= 0.0 && train.beta2 < 1.0,
          ErrorCode::invalid_parameter, "config: Adam betas must lie in [0, 1)");
  require(train.latent >= 1 && train.base_width >= 1 && train.local_critic_width >= 1, ErrorCode::invalid_parameter,
          "config: latent and widths must be >= 1");
  require(train.encoder_convs >= 1 && train.decoder_convs >= 1 && train.critic_convs >= 1,
          ErrorCode::invalid_parameter, "config: conv counts must be >= 1");
  require(train.lambda_d >= 0.0 && train.lambda_kl >= 0.0 && train.lambda_gp >= 0.0, ErrorCode::invalid_parameter,
          "config: loss weights must be non-negative");
  require(train.n_critic >= 1, ErrorCode::invalid_parameter, "config: train.n_critic must be >= 1");
  require(train.max_steps >= 0 && train.max_seconds >= 0.0 && train.checkpoint_every >= 0,
          ErrorCode::invalid_parameter, "config: limits must be non-negative");
  train_mode_from_string(train.mode);
  lr_schedule_from_string(train.schedule);
  require(train.final_lr_scale > 0.0 && train.final_lr_scale <= 1.0, ErrorCode::invalid_parameter,
          "config: train.final_lr_scale must be in (0, 1]");
  require(extract.tau > 0.0 && extract.tau < 1.0, ErrorCode::invalid_parameter, "config: extract.tau must be in (0, 1)");
  require(extract.beta >= 0.0 && extract.beta <= 1.0, ErrorCode::invalid_parameter,
          "config: extract.beta must be in [0, 1]");
  require(extract.gamma > 0.0, ErrorCode::invalid_parameter, "config: extract.gamma must be positive");
  require(extract.smooth_iters >= 0, ErrorCode::invalid_parameter, "config: extract.smooth_iters must be >= 0");
}

}  // namespace tetfield::cli
