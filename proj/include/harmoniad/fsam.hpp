#pragma once

// High-frequency branch.
//
// The spectrum amplitude is rescaled by a nonnegative, input-generated mask
// with the phase left intact; the result, brought back to the spatial
// domain, queries the unmodulated spatial tokens through attention whose
// logits carry a learned bias over 4-D relative offsets.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "harmoniad/numerics.hpp"

namespace harmoniad::fsam {

struct Position {
  int x = 0;
  int y = 0;
};

// Raster-order cell coordinates of an H x W grid.
inline std::vector<Position> grid_positions(int h, int w) {
  std::vector<Position> p;
  p.reserve(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) p.push_back({x, y});
  return p;
}

// [x_i - x_j, y_i - y_j, |x_i - x_j|, |y_i - y_j|]
inline std::array<double, 4> offset_descriptor(Position pi, Position pj) {
  const double dx = pi.x - pj.x;
  const double dy = pi.y - pj.y;
  return {dx, dy, std::abs(dx), std::abs(dy)};
}

template <typename S>
Mat<S> bias_matrix(const std::vector<Position>& freq_positions, const std::vector<Position>& spatial_positions,
                   const Vec<S>& e_theta) {
  if (freq_positions.empty() || spatial_positions.empty()) throw std::invalid_argument("bias_matrix: no positions");
  if (e_theta.size() != 4) throw std::invalid_argument("bias_matrix: e_theta must have 4 entries");
  const auto nf = static_cast<Eigen::Index>(freq_positions.size());
  const auto ns = static_cast<Eigen::Index>(spatial_positions.size());
  Mat<S> b(nf, ns);
  for (Eigen::Index j = 0; j < ns; ++j)
    for (Eigen::Index i = 0; i < nf; ++i) {
      const auto d = offset_descriptor(freq_positions[i], spatial_positions[j]);
      if constexpr (std::is_same_v<S, Var>) {
        b(i, j) = ad::weighted_sum(d, std::span<const Var>(e_theta.data(), 4));
      } else {
        b(i, j) = e_theta[0] * d[0] + e_theta[1] * d[1] + e_theta[2] * d[2] + e_theta[3] * d[3];
      }
    }
  return b;
}

// Softmax(Q K^T / sqrt(d) + B) V. An empty bias means B = 0.
template <typename S>
Mat<S> f2s_attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, const Mat<S>& bias) {
  if (q.cols() == 0) throw std::invalid_argument("f2s_attention: head dimension must be positive");
  if (q.cols() != k.cols() || k.rows() != v.rows()) throw std::invalid_argument("f2s_attention: shape mismatch");
  const bool biased = bias.size() != 0;
  if (biased && (bias.rows() != q.rows() || bias.cols() != k.rows())) {
    throw std::invalid_argument("f2s_attention: bias shape mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat<S> logits = matmul_nt(q, k);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    logits(i) = logits(i) * scale;
    if (biased) logits(i) = logits(i) + bias(i);
  }
  return matmul(softmax_rows(std::move(logits)), v);
}

// Per-channel two-layer pointwise map over log(1 + amplitude) with a
// softplus output, so every mask entry is nonnegative.
template <typename S>
struct MaskGenerator {
  Mat<S> w1;  // C x K
  Mat<S> b1;  // C x K
  Mat<S> w2;  // C x K
  Vec<S> b2;  // C
};

template <typename S>
Mat<S> generate_mask(const Mat<S>& amplitude, const MaskGenerator<S>& g) {
  using std::log;
  const Eigen::Index hidden = g.w1.cols();
  Mat<S> m(amplitude.rows(), amplitude.cols());
  std::vector<S> acc(static_cast<std::size_t>(hidden) + 1);
  for (Eigen::Index bin = 0; bin < amplitude.cols(); ++bin)
    for (Eigen::Index c = 0; c < amplitude.rows(); ++c) {
      const S feature = log(amplitude(c, bin) + 1.0);
      for (Eigen::Index k = 0; k < hidden; ++k) acc[k] = g.w2(c, k) * silu(g.w1(c, k) * feature + g.b1(c, k));
      acc[hidden] = g.b2[c];
      m(c, bin) = softplus(sum<S>(acc));
    }
  return m;
}

enum class Sigma { kSoftplus, kIdentity };

// A_hat = m * sigma(A), X_hat = A_hat * X / (A + eps).
template <typename S>
SpectralField<S> amplitude_modulation(const SpectralField<S>& x, const Mat<S>& mask, double eps,
                                      Sigma sigma = Sigma::kSoftplus) {
  if (!(eps > 0.0)) throw std::invalid_argument("amplitude_modulation: eps must be positive");
  if (mask.rows() != x.re.rows() || mask.cols() != x.re.cols()) {
    throw std::invalid_argument("amplitude_modulation: mask shape mismatch");
  }
  SpectralField<S> out{x.height, x.width, Mat<S>(x.re.rows(), x.re.cols()), Mat<S>(x.im.rows(), x.im.cols())};
  for (Eigen::Index i = 0; i < x.re.size(); ++i) {
    const S a = magnitude(x.re(i), x.im(i));
    const S shaped = sigma == Sigma::kSoftplus ? softplus(a) : a;
    const S gain = mask(i) * shaped / (a + eps);
    out.re(i) = gain * x.re(i);
    out.im(i) = gain * x.im(i);
  }
  return out;
}

template <typename S>
Mat<S> amplitudes(const SpectralField<S>& x) {
  Mat<S> a(x.re.rows(), x.re.cols());
  for (Eigen::Index i = 0; i < x.re.size(); ++i) a(i) = magnitude(x.re(i), x.im(i));
  return a;
}

template <typename S>
struct FsamParams {
  Mat<S> w_q;  // C x d
  Mat<S> w_k;  // C x d
  Mat<S> w_v;  // C x C
  Vec<S> e_theta;  // 4
  MaskGenerator<S> mask;
  Vec<S> blend;  // C, logits of the residual blend
};

struct FsamOptions {
  bool relative_bias = true;
  Sigma sigma = Sigma::kSoftplus;
  double eps = 1e-3;
};

// fft -> amplitude modulation -> ifft -> attention (queries from the
// modulated map, keys/values from the input) -> gated residual blend.
template <typename S>
FeatureMap<S> fsam_forward(const FeatureMap<S>& high, const FsamParams<S>& p, const FsamOptions& opt = {}) {
  const SpectralField<S> spectrum = fft2(high);
  const Mat<S> mask = generate_mask(amplitudes(spectrum), p.mask);
  const FeatureMap<S> modulated = ifft2(amplitude_modulation(spectrum, mask, opt.eps, opt.sigma));

  const Mat<S> spatial = high.values.transpose();        // T x C
  const Mat<S> refined = modulated.values.transpose();   // T x C
  const Mat<S> q = matmul(refined, p.w_q);
  const Mat<S> k = matmul(spatial, p.w_k);
  const Mat<S> v = matmul(spatial, p.w_v);
  Mat<S> bias;
  if (opt.relative_bias) {
    const auto pos = grid_positions(high.height, high.width);
    bias = bias_matrix(pos, pos, p.e_theta);
  }
  const Mat<S> attended = f2s_attention(q, k, v, bias);  // T x C

  FeatureMap<S> out(high.channels(), high.height, high.width);
  for (int c = 0; c < high.channels(); ++c) {
    const S g = sigmoid(p.blend[c]);
    for (int t = 0; t < high.tokens(); ++t) {
      const S& y = modulated.values(c, t);
      out.values(c, t) = y + g * (attended(t, c) - y);
    }
  }
  return out;
}

}  // namespace harmoniad::fsam
