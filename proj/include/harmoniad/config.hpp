#pragma once

// Run configuration: a flat key=value text format, one setting per line,
// '#' starts a comment. Every command echoes its effective configuration
// next to its outputs so any run can be replayed.

#include <cstdint>
#include <string>

#include "harmoniad/training.hpp"

namespace harmoniad {

struct RunConfig {
  std::uint64_t seed = 42;

  // data
  int n_classes = 4;
  int n_train = 200;
  int n_test = 100;
  int n_val = 40;
  double anomaly_fraction = 0.5;
  int image_size = 64;
  int patch = 8;
  double noise = 0.03;

  // model
  int channels = 16;
  int head_dim = 8;
  int gscm_rank = 4;
  int mask_hidden = 4;
  double amp_eps = 1e-3;

  // soft gate
  std::string gate = "soft";  // soft | hard:<t>
  double kappa = 8.0;
  double tau = 0.05;
  int candidates = 8;
  double r_min = 0.1;
  double r_max = 0.9;

  // objective
  double lambda_n = 1.0;
  double lambda_a = 1.0;
  double lambda_con = 1.0;
  double lambda_an = 1.0;
  double lambda_far = 1.0;
  double lambda_tri = 1.0;
  double lambda_reg = 1e-4;
  double margin_far = 0.2;
  double margin_tri = 0.5;
  double con_temperature = 0.1;
  double con_radius = 2.0;

  // optimizer
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_opt = 1e-8;
  int batch = 8;
  int steps = 500;

  // ablations
  bool no_fsam = false;
  bool no_gscm = false;
  bool no_f2s = false;

  std::string out = "run";

  // Applies one "key=value" assignment; throws ConfigError on unknown keys
  // or malformed values.
  void set(const std::string& key, const std::string& value);
  void parse(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string to_text() const;

  void validate() const;

  softgate::SoftGateConfig gate_config() const;
  pipeline::PipelineConfig pipeline_config() const;
  ModelShape model_shape() const;
  training::SynthConfig train_data() const;
  training::SynthConfig test_data() const;
  training::SynthConfig val_data() const;
  training::TrainConfig train_config() const;

  std::uint64_t train_seed() const { return seed; }
  std::uint64_t test_seed() const { return seed + 1; }
  std::uint64_t val_seed() const { return seed + 2; }
};

}  // namespace harmoniad
