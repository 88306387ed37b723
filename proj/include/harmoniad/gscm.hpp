#pragma once

// Low-frequency branch.
//
// Tokens attend to each other through a low-rank dynamic affinity with a
// relative position bias, are modulated per token, and are then scanned in
// raster order by a gated recurrence (DMU) that couples them with a 3x3
// convolutional stream. A sigmoid gate plus a coordinate encoding produce the
// branch output, which is added back onto the incoming low stream.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "harmoniad/numerics.hpp"

namespace harmoniad::gscm {

template <typename S>
struct GscmParams {
  Mat<S> w_q;       // C x r
  Mat<S> w_k;       // C x r
  Vec<S> rel_bias;  // (2H-1)(2W-1), indexed by relative offset
  Mat<S> w_pi;      // C x C
  Mat<S> w_gamma;   // C x C
  Mat<S> conv;      // 9C x C, one C x C block per 3x3 tap
  Mat<S> w_o;       // C x C
  Mat<S> w_d;       // C x C
  Mat<S> w_gd;      // C x C
  Mat<S> w_r;       // C x C
  Mat<S> w_go;      // C x C
  Mat<S> w_c;       // C x 4
};

struct GscmOptions {
  bool identity_activation = false;     // replaces SiLU in the aggregation
  std::optional<double> forced_gate;    // pins g_t for every token
  bool residual = true;
};

inline int rel_bias_size(int h, int w) { return (2 * h - 1) * (2 * w - 1); }

// Table index of the offset from token j to token i.
inline int rel_index(int ti, int tj, int h, int w) {
  const int dy = ti / w - tj / w;
  const int dx = ti % w - tj % w;
  return (dy + h - 1) * (2 * w - 1) + (dx + w - 1);
}

// W x for a column vector x.
template <typename S>
Vec<S> matvec(const Mat<S>& w, const Vec<S>& x) {
  Vec<S> out(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) out[i] = dot(&w(i, 0), w.rows(), x.data(), 1, w.cols());
  return out;
}

// Softmax rows of X W_q (X W_k)^T / sqrt(r) + B_rel.
template <typename S>
Mat<S> dynamic_affinity(const Mat<S>& x, const GscmParams<S>& p, int h, int w) {
  if (x.rows() != static_cast<Eigen::Index>(h) * w) throw std::invalid_argument("dynamic_affinity: token count");
  if (p.rel_bias.size() != rel_bias_size(h, w)) throw std::invalid_argument("dynamic_affinity: bias table size");
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.w_q.cols()));
  Mat<S> logits = matmul_nt(matmul(x, p.w_q), matmul(x, p.w_k));
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
      logits(i, j) = logits(i, j) * scale + p.rel_bias[rel_index(static_cast<int>(i), static_cast<int>(j), h, w)];
  return softmax_rows(std::move(logits));
}

// diag(sigmoid(W_pi x)) x + W_gamma x.
template <typename S>
Vec<S> token_modulation(const Vec<S>& x, const GscmParams<S>& p) {
  const Vec<S> pi = matvec(p.w_pi, x);
  const Vec<S> gamma = matvec(p.w_gamma, x);
  Vec<S> out(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) out[c] = sigmoid(pi[c]) * x[c] + gamma[c];
  return out;
}

// token_modulation applied to every row of X (T x C).
template <typename S>
Mat<S> modulate_tokens(const Mat<S>& x, const GscmParams<S>& p) {
  const Mat<S> pi = matmul_nt(x, p.w_pi);
  const Mat<S> gamma = matmul_nt(x, p.w_gamma);
  Mat<S> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = sigmoid(pi(i)) * x(i) + gamma(i);
  return out;
}

template <typename S>
Mat<S> aggregate(const Mat<S>& affinity, const Mat<S>& modulated, bool identity_activation = false) {
  Mat<S> z = matmul(affinity, modulated);
  if (!identity_activation)
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = silu(z(i));
  return z;
}

// Zero-padded 3x3 convolution over the token grid; rows of X are tokens.
template <typename S>
Mat<S> conv3x3(const Mat<S>& x, const Mat<S>& weights, int h, int w) {
  const Eigen::Index c = x.cols();
  if (weights.rows() != 9 * c) throw std::invalid_argument("conv3x3: weight shape");
  Mat<S> patches = Mat<S>::Constant(x.rows(), 9 * c, S(0.0));
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const int t = y * w + xx;
      for (int tap = 0; tap < 9; ++tap) {
        const int sy = y + tap / 3 - 1;
        const int sx = xx + tap % 3 - 1;
        if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
        for (Eigen::Index k = 0; k < c; ++k) patches(t, tap * c + k) = x(sy * w + sx, k);
      }
    }
  return matmul(patches, weights);
}

template <typename S>
struct DmuStep {
  Vec<S> out;
  Vec<S> state;
};

// g = sigmoid(W_gd v), r = sigmoid(W_r v),
// m = g * s_prev + (1 - g) * softplus(W_d (r * v)),
// out = W_o (u * silu(v + m)), next state = m.
template <typename S>
DmuStep<S> dmu_step(const Vec<S>& u, const Vec<S>& v, const Vec<S>& s_prev, const GscmParams<S>& p,
                    std::optional<double> forced_gate = std::nullopt) {
  const Eigen::Index c = v.size();
  const Vec<S> gate_logits = matvec(p.w_gd, v);
  const Vec<S> reset_logits = matvec(p.w_r, v);
  Vec<S> rv(c);
  for (Eigen::Index i = 0; i < c; ++i) rv[i] = sigmoid(reset_logits[i]) * v[i];
  const Vec<S> fresh_logits = matvec(p.w_d, rv);
  DmuStep<S> step{Vec<S>(c), Vec<S>(c)};
  Vec<S> coupled(c);
  for (Eigen::Index i = 0; i < c; ++i) {
    const S g = forced_gate ? S(*forced_gate) : sigmoid(gate_logits[i]);
    const S fresh = softplus(fresh_logits[i]);
    step.state[i] = g * s_prev[i] + (1.0 - g) * fresh;
    coupled[i] = u[i] * silu(v[i] + step.state[i]);
  }
  step.out = matvec(p.w_o, coupled);
  return step;
}

// Runs dmu_step over tokens in raster order from a zero state.
template <typename S>
Mat<S> dmu_scan(const Mat<S>& upper, const Mat<S>& lower, const GscmParams<S>& p,
                std::optional<double> forced_gate = std::nullopt) {
  const Eigen::Index c = lower.cols();
  Mat<S> out(lower.rows(), c);
  Vec<S> state = Vec<S>::Constant(c, S(0.0));
  for (Eigen::Index t = 0; t < lower.rows(); ++t) {
    DmuStep<S> step = dmu_step<S>(upper.row(t).transpose(), lower.row(t).transpose(), state, p, forced_gate);
    out.row(t) = step.out.transpose();
    state = std::move(step.state);
  }
  return out;
}

// rho(p) = (x/W, y/H, x*y/(W*H), 1).
inline std::array<double, 4> coordinate_features(int t, int h, int w) {
  const double x = t % w;
  const double y = t / w;
  return {x / w, y / h, x * y / (static_cast<double>(w) * h), 1.0};
}

// Y = sigmoid(X W_go) * Z + Coord, Coord_t = W_c rho(p_t).
template <typename S>
Mat<S> output_fusion(const Mat<S>& x, const Mat<S>& z, const GscmParams<S>& p, int h, int w) {
  if (x.rows() != z.rows() || x.cols() != z.cols()) throw std::invalid_argument("output_fusion: shape mismatch");
  const Mat<S> gate_logits = matmul(x, p.w_go);
  Mat<S> y(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const auto rho = coordinate_features(static_cast<int>(t), h, w);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      S coord;
      if constexpr (std::is_same_v<S, Var>) {
        const Var row[4] = {p.w_c(c, 0), p.w_c(c, 1), p.w_c(c, 2), p.w_c(c, 3)};
        coord = ad::weighted_sum(rho, row);
      } else {
        coord = p.w_c(c, 0) * rho[0] + p.w_c(c, 1) * rho[1] + p.w_c(c, 2) * rho[2] + p.w_c(c, 3) * rho[3];
      }
      y(t, c) = sigmoid(gate_logits(t, c)) * z(t, c) + coord;
    }
  }
  return y;
}

template <typename S>
FeatureMap<S> gscm_forward(const FeatureMap<S>& low, const GscmParams<S>& p, const GscmOptions& opt = {}) {
  const int h = low.height;
  const int w = low.width;
  const Mat<S> x = low.values.transpose();  // T x C
  const Mat<S> affinity = dynamic_affinity(x, p, h, w);
  const Mat<S> z = aggregate(affinity, modulate_tokens(x, p), opt.identity_activation);
  const Mat<S> upper = conv3x3(x, p.conv, h, w);
  const Mat<S> scanned = dmu_scan(upper, z, p, opt.forced_gate);
  const Mat<S> y = output_fusion(x, scanned, p, h, w);
  FeatureMap<S> out(low.channels(), h, w);
  for (int t = 0; t < low.tokens(); ++t)
    for (int c = 0; c < low.channels(); ++c)
      out.values(c, t) = opt.residual ? low.values(c, t) + y(t, c) : y(t, c);
  return out;
}

}  // namespace harmoniad::gscm
