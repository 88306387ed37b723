#pragma once

// Desk-scale supervision: frozen filter-bank encoder, synthetic defect
// data, exact gradients of the objective, Adam, and the training loop.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "harmoniad/numerics.hpp"
#include "harmoniad/params.hpp"
#include "harmoniad/pipeline.hpp"
#include "harmoniad/rng.hpp"

namespace harmoniad::training {

// ---------------------------------------------------------------------------
// Stub encoder.

inline constexpr int kEncoderBankSize = 16;

// Frozen per-patch filter bank: mean, spread, signed and absolute
// directional differences, center/half contrasts, checker and Laplacian
// responses, range. Channels beyond the first C are dropped.
FeatureMap<double> stub_encoder(const Mat<double>& image, int channels, int patch);

// ---------------------------------------------------------------------------
// Synthetic dataset.

struct SynthConfig {
  int n_classes = 4;
  int n_per_class = 50;
  double anomaly_fraction = 0.5;
  int image_size = 64;
  double noise = 0.03;
};

struct SynthSample {
  Mat<double> image;       // values in [0,1]
  Mat<double> pixel_mask;  // {0,1}
  int class_id = 0;
  bool anomalous = false;
};

enum class DefectKind { kSpot, kScratch, kTextureSwap };

// Defect-free texture of a class, with per-sample jitter drawn from rng.
Mat<double> render_texture(int class_id, int size, Rng& rng);

// Paints a random defect into image and returns its pixel mask.
Mat<double> inject_defect(Mat<double>& image, int class_id, int n_classes, Rng& rng);

std::vector<SynthSample> synth_dataset(std::uint64_t seed, const SynthConfig& cfg);

// A patch is abnormal when any of its pixels is.
Mat<double> patch_mask(const Mat<double>& pixel_mask, int patch);

// Encoded sample ready for the model.
struct Example {
  FeatureMap<double> features;
  Mat<double> patch_mask;
  Mat<double> pixel_mask;
  bool anomalous = false;
};

std::vector<Example> prepare(const std::vector<SynthSample>& samples, int channels, int patch);

// ---------------------------------------------------------------------------
// Objective and gradients.

struct Objective {
  pipeline::PipelineConfig pipeline;
  pipeline::LossWeights weights;
  pipeline::LossSettings settings;
};

using Batch = std::span<const Example* const>;

// Batch objective: each term averaged over the batch's qualifying patches,
// plus the L2 penalty.
double batch_loss(const ModelParams& params, Batch batch, const Objective& obj);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Exact gradient by reverse accumulation, one tape per sample.
LossGrad loss_and_grad(const ModelParams& params, Batch batch, const Objective& obj);

// (L(theta + h e_i) - L(theta - h e_i)) / 2h.
double finite_diff(const std::function<double(std::span<const double>)>& loss, std::span<const double> theta,
                   std::size_t index, double h);
double finite_diff(const ModelParams& params, Batch batch, const Objective& obj, std::size_t index, double h);

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  AdamConfig cfg;
};

OptimState make_optim_state(std::size_t n, const AdamConfig& cfg);
void adam_step(OptimState& state, std::span<double> params, std::span<const double> grads);

// ---------------------------------------------------------------------------
// Training loop.

struct TrainConfig {
  std::uint64_t seed = 42;
  ModelShape shape;
  int patch = 8;
  int batch = 8;
  int steps = 500;
  AdamConfig adam;
  Objective objective;
};

struct MetricRow {
  int step = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double val_pixel_auroc = 0.0;
  double val_image_auroc = 0.0;
};

struct TrainResult {
  ModelParams params;
  OptimState optim;
  std::vector<MetricRow> history;
};

// Anomaly maps for a set of examples at image resolution.
std::vector<pipeline::AnomalyMap> predict(const ModelParams& params, const std::vector<Example>& examples,
                                          const pipeline::PipelineConfig& cfg, int patch);

TrainResult train(const TrainConfig& cfg, const std::vector<Example>& train_set, const std::vector<Example>& val_set);

}  // namespace harmoniad::training
