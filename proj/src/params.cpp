#include "harmoniad/params.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "harmoniad/rng.hpp"

namespace harmoniad {

void ModelShape::validate() const {
  if (channels < 1) throw ConfigError("channels must be positive");
  if (height < 2 || width < 2) throw ConfigError("patch grid must be at least 2x2");
  if (head_dim < 1) throw ConfigError("head_dim must be positive");
  if (rank < 1 || (channels > 1 && rank >= channels)) throw ConfigError("gscm rank must satisfy 1 <= r < C");
  if (mask_hidden < 1) throw ConfigError("mask_hidden must be positive");
}

ModelParams::ModelParams(const ModelShape& s) : shape_(s) {
  s.validate();
  const int c = s.channels;
  add("gate.scale", {1});
  add("gate.offset", {1});
  add("fsam.w_q", {c, s.head_dim});
  add("fsam.w_k", {c, s.head_dim});
  add("fsam.w_v", {c, c});
  add("fsam.e_theta", {4});
  add("fsam.mask_w1", {c, s.mask_hidden});
  add("fsam.mask_b1", {c, s.mask_hidden});
  add("fsam.mask_w2", {c, s.mask_hidden});
  add("fsam.mask_b2", {c});
  add("fsam.blend", {c});
  add("gscm.w_q", {c, s.rank});
  add("gscm.w_k", {c, s.rank});
  add("gscm.rel_bias", {gscm::rel_bias_size(s.height, s.width)});
  add("gscm.w_pi", {c, c});
  add("gscm.w_gamma", {c, c});
  add("gscm.conv", {9 * c, c});
  add("gscm.w_o", {c, c});
  add("gscm.w_d", {c, c});
  add("gscm.w_gd", {c, c});
  add("gscm.w_r", {c, c});
  add("gscm.w_go", {c, c});
  add("gscm.w_c", {c, 4});
  add("heads.high", {c});
  add("heads.low", {c});
}

void ModelParams::add(std::string name, std::vector<int> shape) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  groups_.push_back({std::move(name), std::move(shape), values_.size(), n});
  values_.resize(values_.size() + n, 0.0);
}

const ParamGroup& ModelParams::group(const std::string& name) const {
  for (const ParamGroup& g : groups_)
    if (g.name == name) return g;
  throw std::out_of_range("no parameter group named " + name);
}

std::span<double> ModelParams::view(const std::string& name) {
  const ParamGroup& g = group(name);
  return {values_.data() + g.offset, g.size};
}

std::span<const double> ModelParams::view(const std::string& name) const {
  const ParamGroup& g = group(name);
  return {values_.data() + g.offset, g.size};
}

std::string ModelParams::name_of(std::size_t index) const {
  for (const ParamGroup& g : groups_)
    if (index >= g.offset && index < g.offset + g.size) return g.name + "[" + std::to_string(index - g.offset) + "]";
  throw std::out_of_range("parameter index out of range");
}

double ModelParams::norm_sq() const {
  double total = 0.0;
  for (double v : values_) total += v * v;
  return total;
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  ModelParams p(shape);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(shape.channels));
  auto noise = [&](const std::string& name, double amplitude) {
    for (double& v : p.view(name)) v = rng.uniform(-amplitude, amplitude);
  };
  auto fill = [&](const std::string& name, double value) {
    for (double& v : p.view(name)) v = value;
  };
  const int c = shape.channels;

  p.view("gate.scale")[0] = 0.5;
  p.view("gate.offset")[0] = 0.0;

  noise("fsam.w_q", scale);
  noise("fsam.w_k", scale);
  noise("fsam.w_v", 0.1 * scale);
  for (int i = 0; i < c; ++i) p.view("fsam.w_v")[static_cast<std::size_t>(i) * c + i] += 1.0;
  fill("fsam.e_theta", 0.0);
  noise("fsam.mask_w1", 0.5);
  fill("fsam.mask_b1", 0.0);
  noise("fsam.mask_w2", 0.1);
  fill("fsam.mask_b2", std::log(std::exp(1.0) - 1.0));  // softplus(b2) = 1
  fill("fsam.blend", 0.0);

  noise("gscm.w_q", scale);
  noise("gscm.w_k", scale);
  fill("gscm.rel_bias", 0.0);
  noise("gscm.w_pi", scale);
  noise("gscm.w_gamma", 0.1 * scale);
  noise("gscm.conv", scale / 3.0);
  noise("gscm.w_o", 0.1 * scale);
  noise("gscm.w_d", scale);
  noise("gscm.w_gd", scale);
  noise("gscm.w_r", scale);
  noise("gscm.w_go", scale);
  // Small random coordinate offsets: position-dependent and content-blind,
  // so an untrained model's scores carry no information about defects.
  noise("gscm.w_c", 0.1);

  fill("heads.high", 1.0);
  fill("heads.low", 1.0);
  return p;
}

}  // namespace harmoniad
