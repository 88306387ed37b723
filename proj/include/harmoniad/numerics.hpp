#pragma once

// Dense real/complex arithmetic shared by every stage.
//
// Everything is templated on the scalar so the same code runs on double
// (inference, finite differences) and on ad::Var (reverse-mode gradients).
// Feature maps are stored channels x tokens with tokens in raster order,
// i.e. column t holds the channel vector of cell (t / width, t % width).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "harmoniad/autodiff.hpp"
#include "harmoniad/error.hpp"

namespace harmoniad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using ad::Var;

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.v; }

template <typename S>
Mat<double> values_of(const Mat<S>& m) {
  if constexpr (std::is_same_v<S, double>) {
    return m;
  } else {
    return m.unaryExpr([](const S& x) { return value(x); });
  }
}

// ---------------------------------------------------------------------------
// Pointwise activations (double overloads; Var overloads live in ad::).

inline double sigmoid(double x) { return ad::stable_sigmoid(x); }
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double silu(double x) { return x * ad::stable_sigmoid(x); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double magnitude(double re, double im) { return std::hypot(re, im); }

// ---------------------------------------------------------------------------
// Feature maps and spectra.

template <typename S>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Mat<S> values;  // channels x (height * width)

  FeatureMap() = default;
  FeatureMap(int channels, int h, int w) : height(h), width(w), values(Mat<S>::Zero(channels, h * w)) {}
  FeatureMap(int h, int w, Mat<S> v) : height(h), width(w), values(std::move(v)) {
    if (values.cols() != static_cast<Eigen::Index>(h) * w) throw std::invalid_argument("FeatureMap: token count mismatch");
  }

  int channels() const { return static_cast<int>(values.rows()); }
  int tokens() const { return height * width; }
  S& at(int c, int y, int x) { return values(c, y * width + x); }
  const S& at(int c, int y, int x) const { return values(c, y * width + x); }
};

template <typename S>
struct SpectralField {
  int height = 0;
  int width = 0;
  Mat<S> re;  // channels x bins, bins in unshifted raster order
  Mat<S> im;

  int channels() const { return static_cast<int>(re.rows()); }

  Mat<double> amplitude() const {
    Mat<double> a(re.rows(), re.cols());
    for (Eigen::Index i = 0; i < re.size(); ++i) a(i) = std::hypot(value(re(i)), value(im(i)));
    return a;
  }
  // Principal argument in (-pi, pi].
  Mat<double> phase() const {
    Mat<double> p(re.rows(), re.cols());
    for (Eigen::Index i = 0; i < re.size(); ++i) {
      double ph = std::atan2(value(im(i)), value(re(i)));
      if (ph == -std::numbers::pi) ph = std::numbers::pi;
      p(i) = ph;
    }
    return p;
  }
};

inline bool is_power_of_two(int n) { return n >= 1 && (n & (n - 1)) == 0; }

namespace detail {

// Direct O(n^2) transform for lengths that are not powers of two.
template <typename S>
void dft_inplace(S* re, S* im, int n, std::ptrdiff_t stride, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<S> out_re(n);
  std::vector<S> out_im(n);
  std::vector<double> c(n);
  std::vector<double> s(n);
  for (int k = 0; k < n; ++k) {
    const double angle = sign * 2.0 * std::numbers::pi * k / n;
    c[k] = std::cos(angle);
    s[k] = std::sin(angle);
  }
  for (int k = 0; k < n; ++k) {
    S ar(0.0);
    S ai(0.0);
    for (int t = 0; t < n; ++t) {
      const int idx = static_cast<int>((static_cast<long long>(k) * t) % n);
      ar = ar + c[idx] * re[t * stride] - s[idx] * im[t * stride];
      ai = ai + c[idx] * im[t * stride] + s[idx] * re[t * stride];
    }
    out_re[k] = ar;
    out_im[k] = ai;
  }
  for (int k = 0; k < n; ++k) {
    re[k * stride] = out_re[k];
    im[k * stride] = out_im[k];
  }
}

// In-place iterative radix-2 transform of one strided complex sequence.
template <typename S>
void fft_inplace(S* re, S* im, int n, std::ptrdiff_t stride, bool inverse) {
  if (!is_power_of_two(n)) {
    dft_inplace(re, im, n, stride, inverse);
    return;
  }
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i * stride], re[j * stride]);
      std::swap(im[i * stride], im[j * stride]);
    }
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (int len = 2; len <= n; len <<= 1) {
    const int half = len / 2;
    for (int k = 0; k < half; ++k) {
      const double angle = sign * 2.0 * std::numbers::pi * k / len;
      const double wr = std::cos(angle);
      const double wi = std::sin(angle);
      for (int start = 0; start < n; start += len) {
        const std::ptrdiff_t a = (start + k) * stride;
        const std::ptrdiff_t b = (start + k + half) * stride;
        S tr;
        S ti;
        if (k == 0) {
          tr = re[b];
          ti = im[b];
        } else {
          tr = wr * re[b] - wi * im[b];
          ti = wr * im[b] + wi * re[b];
        }
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] = re[a] + tr;
        im[a] = im[a] + ti;
      }
    }
  }
}

template <typename S>
void fft2_channel(std::vector<S>& re, std::vector<S>& im, int h, int w, bool inverse) {
  for (int y = 0; y < h; ++y) fft_inplace(re.data() + y * w, im.data() + y * w, w, 1, inverse);
  for (int x = 0; x < w; ++x) fft_inplace(re.data() + x, im.data() + x, h, w, inverse);
}

inline void check_dims(int h, int w) {
  if (h < 1 || w < 1) throw std::invalid_argument("fft2: empty spatial dimension");
}

}  // namespace detail

// Unnormalized forward DFT of every channel.
template <typename S>
SpectralField<S> fft2(const FeatureMap<S>& x) {
  detail::check_dims(x.height, x.width);
  const int n = x.tokens();
  SpectralField<S> out{x.height, x.width, Mat<S>(x.channels(), n), Mat<S>(x.channels(), n)};
  std::vector<S> re(n);
  std::vector<S> im(n);
  for (int c = 0; c < x.channels(); ++c) {
    for (int t = 0; t < n; ++t) {
      re[t] = x.values(c, t);
      im[t] = S(0.0);
    }
    detail::fft2_channel(re, im, x.height, x.width, false);
    for (int t = 0; t < n; ++t) {
      out.re(c, t) = re[t];
      out.im(c, t) = im[t];
    }
  }
  return out;
}

// Inverse DFT scaled by 1/(H*W); the imaginary residue must vanish.
template <typename S>
FeatureMap<S> ifft2(const SpectralField<S>& x, double imag_tolerance = 1e-6) {
  detail::check_dims(x.height, x.width);
  const int n = x.height * x.width;
  const double scale = 1.0 / n;
  FeatureMap<S> out(x.channels(), x.height, x.width);
  std::vector<S> re(n);
  std::vector<S> im(n);
  double worst = 0.0;
  double peak = 1.0;
  for (int c = 0; c < x.channels(); ++c) {
    for (int t = 0; t < n; ++t) {
      re[t] = x.re(c, t);
      im[t] = x.im(c, t);
    }
    detail::fft2_channel(re, im, x.height, x.width, true);
    for (int t = 0; t < n; ++t) {
      out.values(c, t) = re[t] * scale;
      worst = std::max(worst, std::abs(value(im[t])) * scale);
      peak = std::max(peak, std::abs(value(re[t])) * scale);
    }
  }
  if (worst > imag_tolerance * peak) {
    throw NumericError("ifft2: imaginary residue " + std::to_string(worst) + " exceeds tolerance");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and products.

template <typename S>
S dot(const S* a, std::ptrdiff_t sa, const S* b, std::ptrdiff_t sb, std::ptrdiff_t n) {
  if constexpr (std::is_same_v<S, Var>) {
    return ad::strided_dot(a, sa, b, sb, n);
  } else {
    S total = 0.0;
    for (std::ptrdiff_t i = 0; i < n; ++i) total += a[i * sa] * b[i * sb];
    return total;
  }
}

template <typename S>
S sum(std::span<const S> xs) {
  if constexpr (std::is_same_v<S, Var>) {
    return ad::sum(xs);
  } else {
    S total = 0.0;
    for (const S& x : xs) total += x;
    return total;
  }
}

// A * B.
template <typename S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions disagree");
  if constexpr (std::is_same_v<S, double>) {
    return a * b;
  } else {
    Mat<S> out(a.rows(), b.cols());
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        out(i, j) = dot(&a(i, 0), a.rows(), &b(0, j), 1, a.cols());
    return out;
  }
}

// A * B^T.
template <typename S>
Mat<S> matmul_nt(const Mat<S>& a, const Mat<S>& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions disagree");
  if constexpr (std::is_same_v<S, double>) {
    return a * b.transpose();
  } else {
    Mat<S> out(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        out(i, j) = dot(&a(i, 0), a.rows(), &b(j, 0), b.rows(), a.cols());
    return out;
  }
}

// Numerically stable softmax of a contiguous or strided sequence.
template <typename S>
void softmax_inplace(S* x, std::ptrdiff_t stride, std::ptrdiff_t n) {
  using std::exp;
  double peak = value(x[0]);
  for (std::ptrdiff_t i = 1; i < n; ++i) peak = std::max(peak, value(x[i * stride]));
  std::vector<S> e(static_cast<std::size_t>(n));
  for (std::ptrdiff_t i = 0; i < n; ++i) e[i] = exp(x[i * stride] - peak);
  const S total = sum<S>(e);
  for (std::ptrdiff_t i = 0; i < n; ++i) x[i * stride] = e[i] / total;
}

template <typename S>
std::vector<S> stable_softmax(std::span<const S> x) {
  if (x.empty()) throw std::invalid_argument("stable_softmax: empty input");
  std::vector<S> out(x.begin(), x.end());
  softmax_inplace(out.data(), 1, static_cast<std::ptrdiff_t>(out.size()));
  return out;
}

// Row-wise softmax of a matrix.
template <typename S>
Mat<S> softmax_rows(Mat<S> logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) softmax_inplace(&logits(i, 0), logits.rows(), logits.cols());
  return logits;
}

// Cosine of the angle between two strided vectors. Two zero vectors are
// treated as identical (1); one zero vector against a nonzero one gives 0.
template <typename S>
S cosine_similarity(const S* a, std::ptrdiff_t sa, const S* b, std::ptrdiff_t sb, std::ptrdiff_t n) {
  using std::sqrt;
  const S ab = dot(a, sa, b, sb, n);
  const S aa = dot(a, sa, a, sa, n);
  const S bb = dot(b, sb, b, sb, n);
  if (value(aa) == 0.0 && value(bb) == 0.0) return S(1.0);
  if (value(aa) == 0.0 || value(bb) == 0.0) return S(0.0);
  return ab / sqrt(aa * bb);
}

template <typename S>
S cosine_similarity(const Vec<S>& a, const Vec<S>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  return cosine_similarity(a.data(), 1, b.data(), 1, a.size());
}

template <typename S, typename F>
Mat<S> map(const Mat<S>& m, F&& f) {
  Mat<S> out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) out(i) = f(m(i));
  return out;
}

inline bool all_finite(const Mat<double>& m) { return m.allFinite(); }

}  // namespace harmoniad
