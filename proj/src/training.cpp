#include "harmoniad/training.hpp"

#include <cmath>
#include <numeric>

#include "harmoniad/evalio.hpp"

namespace harmoniad::training {

namespace {

using pipeline::LossTerms;
using pipeline::TermCounts;

TermCounts batch_counts(Batch batch, const Objective& obj) {
  TermCounts k;
  for (const Example* e : batch) k += pipeline::term_counts(e->patch_mask, obj.settings);
  return k;
}

// Contribution of one sample to the batch objective, without the penalty.
template <typename S>
S sample_objective(const ModelParams& layout, std::span<const S> theta, const Example& e, const TermCounts& counts,
                   const Objective& obj) {
  const Weights<S> w = unpack<S>(layout, theta);
  const pipeline::Forward<S> f = pipeline::forward(e.features, w, obj.pipeline);
  const LossTerms<S> sums = pipeline::loss_sums(f.recon, e.features, e.patch_mask, obj.settings);
  return pipeline::weighted_terms(pipeline::normalize(sums, counts), obj.weights);
}

double loss_at(const ModelParams& layout, std::span<const double> theta, Batch batch, const Objective& obj) {
  const TermCounts counts = batch_counts(batch, obj);
  double total = 0.0;
  for (const Example* e : batch) total += sample_objective<double>(layout, theta, *e, counts, obj);
  double norm_sq = 0.0;
  for (double v : theta) norm_sq += v * v;
  return total + obj.weights.reg * norm_sq;
}

}  // namespace

double batch_loss(const ModelParams& params, Batch batch, const Objective& obj) {
  return loss_at(params, params.values(), batch, obj);
}

LossGrad loss_and_grad(const ModelParams& params, Batch batch, const Objective& obj) {
  const std::vector<double>& theta = params.values();
  const std::size_t n = theta.size();
  const TermCounts counts = batch_counts(batch, obj);

  LossGrad out;
  out.grad.assign(n, 0.0);
  // Reused across calls so the tape keeps its capacity between steps.
  thread_local ad::Tape tape;
  thread_local std::vector<double> adjoint;
  for (const Example* e : batch) {
    tape.clear();
    ad::TapeScope scope(tape);
    std::vector<Var> leaves(n);
    for (std::size_t i = 0; i < n; ++i) leaves[i] = Var::leaf(theta[i]);
    const Var l = sample_objective<Var>(params, leaves, *e, counts, obj);
    out.loss += l.v;
    tape.backward(l.id, adjoint);
    for (std::size_t i = 0; i < n; ++i) out.grad[i] += adjoint[static_cast<std::size_t>(leaves[i].id)];
  }
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    norm_sq += theta[i] * theta[i];
    out.grad[i] += 2.0 * obj.weights.reg * theta[i];
  }
  out.loss += obj.weights.reg * norm_sq;

  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(out.grad[i])) throw NumericError("non-finite gradient for parameter " + params.name_of(i));
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

double finite_diff(const std::function<double(std::span<const double>)>& loss, std::span<const double> theta,
                   std::size_t index, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff: step must be positive");
  std::vector<double> probe(theta.begin(), theta.end());
  probe[index] = theta[index] + h;
  const double up = loss(probe);
  probe[index] = theta[index] - h;
  const double down = loss(probe);
  return (up - down) / (2.0 * h);
}

double finite_diff(const ModelParams& params, Batch batch, const Objective& obj, std::size_t index, double h) {
  return finite_diff([&](std::span<const double> theta) { return loss_at(params, theta, batch, obj); },
                     params.values(), index, h);
}

OptimState make_optim_state(std::size_t n, const AdamConfig& cfg) {
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0, cfg};
}

void adam_step(OptimState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state sizes differ");
  }
  const AdamConfig& c = state.cfg;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

std::vector<pipeline::AnomalyMap> predict(const ModelParams& params, const std::vector<Example>& examples,
                                          const pipeline::PipelineConfig& cfg, int patch) {
  const Weights<double> w = unpack(params);
  std::vector<pipeline::AnomalyMap> maps;
  maps.reserve(examples.size());
  for (const Example& e : examples) {
    const pipeline::Forward<double> f = pipeline::forward(e.features, w, cfg);
    maps.push_back(pipeline::anomaly_map(pipeline::patch_anomaly_score(f.recon, e.features),
                                         e.features.height * patch, e.features.width * patch));
  }
  return maps;
}

namespace {

std::pair<double, double> validation_auroc(const ModelParams& params, const std::vector<Example>& val,
                                           const TrainConfig& cfg) {
  if (val.empty()) return {0.0, 0.0};
  const auto maps = predict(params, val, cfg.objective.pipeline, cfg.patch);
  std::vector<evalio::Prediction> preds;
  preds.reserve(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    preds.push_back({maps[i].pixel_scores, val[i].pixel_mask, maps[i].image_score, val[i].anomalous});
  }
  const evalio::Metrics m = evalio::evaluate(preds);
  return {m.p_roc, m.i_roc};
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<Example>& train_set, const std::vector<Example>& val_set) {
  if (cfg.batch < 1) throw ConfigError("batch must be positive");
  if (cfg.steps < 0) throw ConfigError("steps must be nonnegative");
  if (train_set.empty()) throw ConfigError("training set is empty");

  TrainResult r{init_params(cfg.shape, cfg.seed), make_optim_state(0, cfg.adam), {}};
  r.optim = make_optim_state(r.params.total_count(), cfg.adam);
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const auto n = static_cast<int>(train_set.size());
  const int steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  int cursor = n;

  auto shuffle = [&] {
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(static_cast<std::uint64_t>(i) + 1)]);
    cursor = 0;
  };
  auto next_batch = [&] {
    std::vector<const Example*> batch;
    while (static_cast<int>(batch.size()) < std::min(cfg.batch, n)) {
      if (cursor >= n) shuffle();
      batch.push_back(&train_set[static_cast<std::size_t>(order[cursor++])]);
    }
    return batch;
  };

  auto log_row = [&](int step, double loss) {
    const auto [p, i] = validation_auroc(r.params, val_set, cfg);
    r.history.push_back({step, step / steps_per_epoch, loss, p, i});
  };

  if (cfg.steps == 0) {
    std::vector<const Example*> first;
    for (int i = 0; i < std::min(cfg.batch, n); ++i) first.push_back(&train_set[static_cast<std::size_t>(i)]);
    log_row(0, batch_loss(r.params, first, cfg.objective));
    return r;
  }

  double running = 0.0;
  int running_count = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    const std::vector<const Example*> batch = next_batch();
    LossGrad lg = loss_and_grad(r.params, batch, cfg.objective);
    if (step == 0) log_row(0, lg.loss);
    running += lg.loss;
    ++running_count;
    adam_step(r.optim, r.params.values(), lg.grad);
    for (std::size_t i = 0; i < r.params.total_count(); ++i) {
      if (!std::isfinite(r.params.values()[i])) {
        throw NumericError("optimizer produced a non-finite value for " + r.params.name_of(i));
      }
    }
    const int done = step + 1;
    if (done % steps_per_epoch == 0 || done == cfg.steps) {
      log_row(done, running / running_count);
      running = 0.0;
      running_count = 0;
    }
  }
  return r;
}

}  // namespace harmoniad::training
