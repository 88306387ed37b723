#pragma once

// Flat, named storage for every learnable weight of the model.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "harmoniad/fsam.hpp"
#include "harmoniad/gscm.hpp"
#include "harmoniad/numerics.hpp"
#include "harmoniad/softgate.hpp"

namespace harmoniad {

struct ModelShape {
  int channels = 16;
  int height = 8;
  int width = 8;
  int head_dim = 8;
  int rank = 4;
  int mask_hidden = 4;

  void validate() const;
};

struct ParamGroup {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const ModelShape& shape);

  const ModelShape& shape() const { return shape_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  std::size_t total_count() const { return values_.size(); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  const ParamGroup& group(const std::string& name) const;
  std::span<double> view(const std::string& name);
  std::span<const double> view(const std::string& name) const;

  // "group[i]" for a flat index.
  std::string name_of(std::size_t index) const;
  double norm_sq() const;

 private:
  void add(std::string name, std::vector<int> shape);

  ModelShape shape_;
  std::vector<ParamGroup> groups_;
  std::vector<double> values_;
};

// Deterministic initialization: small uniform projections scaled by
// 1/sqrt(C), zero relative biases, small random coordinate weights,
// identity heads.
ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

// Structured view of the parameters in either scalar type.
template <typename S>
struct Weights {
  softgate::GateParams<S> gate;
  fsam::FsamParams<S> fsam;
  gscm::GscmParams<S> gscm;
  Vec<S> head_high;
  Vec<S> head_low;
};

template <typename S>
Weights<S> unpack(const ModelParams& layout, std::span<const S> flat) {
  auto mat = [&](const std::string& name) {
    const ParamGroup& g = layout.group(name);
    const int rows = g.shape[0];
    const int cols = g.shape.size() > 1 ? g.shape[1] : 1;
    return Mat<S>(Eigen::Map<const Mat<S>>(flat.data() + g.offset, rows, cols));
  };
  auto vec = [&](const std::string& name) {
    const ParamGroup& g = layout.group(name);
    return Vec<S>(Eigen::Map<const Vec<S>>(flat.data() + g.offset, static_cast<Eigen::Index>(g.size)));
  };
  Weights<S> w;
  w.gate.scale = flat[layout.group("gate.scale").offset];
  w.gate.offset = flat[layout.group("gate.offset").offset];
  w.fsam.w_q = mat("fsam.w_q");
  w.fsam.w_k = mat("fsam.w_k");
  w.fsam.w_v = mat("fsam.w_v");
  w.fsam.e_theta = vec("fsam.e_theta");
  w.fsam.mask.w1 = mat("fsam.mask_w1");
  w.fsam.mask.b1 = mat("fsam.mask_b1");
  w.fsam.mask.w2 = mat("fsam.mask_w2");
  w.fsam.mask.b2 = vec("fsam.mask_b2");
  w.fsam.blend = vec("fsam.blend");
  w.gscm.w_q = mat("gscm.w_q");
  w.gscm.w_k = mat("gscm.w_k");
  w.gscm.rel_bias = vec("gscm.rel_bias");
  w.gscm.w_pi = mat("gscm.w_pi");
  w.gscm.w_gamma = mat("gscm.w_gamma");
  w.gscm.conv = mat("gscm.conv");
  w.gscm.w_o = mat("gscm.w_o");
  w.gscm.w_d = mat("gscm.w_d");
  w.gscm.w_gd = mat("gscm.w_gd");
  w.gscm.w_r = mat("gscm.w_r");
  w.gscm.w_go = mat("gscm.w_go");
  w.gscm.w_c = mat("gscm.w_c");
  w.head_high = vec("heads.high");
  w.head_low = vec("heads.low");
  return w;
}

inline Weights<double> unpack(const ModelParams& params) {
  return unpack<double>(params, std::span<const double>(params.values()));
}

}  // namespace harmoniad
