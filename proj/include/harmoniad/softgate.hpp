#pragma once

// Adaptive low/high frequency separation.
//
// Candidate cutoff radii are scored from the annulus energies of the input
// spectrum, a Gibbs distribution over the scores gives an expected cutoff c,
// and a logistic radial mask around c splits the spectrum into two
// complementary streams. Hard mode replaces the mask with a step at a fixed
// radius for ablations.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "harmoniad/numerics.hpp"

namespace harmoniad::softgate {

struct SoftGateConfig {
  enum class Mode { kSoft, kHard };

  std::vector<double> candidates;
  double kappa = 8.0;
  double tau = 0.05;
  Mode mode = Mode::kSoft;
  double hard_threshold = 0.5;

  // M uniformly spaced radii in [lo, hi].
  static std::vector<double> uniform_candidates(int m, double lo, double hi) {
    std::vector<double> r(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) r[i] = lo + (hi - lo) * i / (m - 1);
    return r;
  }

  static SoftGateConfig defaults() {
    SoftGateConfig cfg;
    cfg.candidates = uniform_candidates(8, 0.1, 0.9);
    return cfg;
  }

  void validate() const {
    if (candidates.size() < 2) throw ConfigError("soft gate needs at least two candidate radii");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i] < 0.0 || candidates[i] > 1.0) throw ConfigError("candidate radii must lie in [0,1]");
      if (i > 0 && candidates[i] <= candidates[i - 1]) throw ConfigError("candidate radii must be strictly increasing");
    }
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (mode == Mode::kHard && (hard_threshold < 0.0 || hard_threshold > 1.0)) {
      throw ConfigError("hard threshold must lie in [0,1]");
    }
  }
};

// Learnable affine map applied to the log annulus energies.
template <typename S>
struct GateParams {
  S scale = 1.0;
  S offset = 0.0;
};

template <typename S>
struct SoftGateState {
  std::vector<S> profile;  // J
  std::vector<S> weights;  // p
  S cutoff = 0.0;          // c
  Mat<S> mask_low;         // H x W, unshifted bin layout
  Mat<S> mask_high;
};

inline constexpr double kEnergyFloor = 1e-12;

// Centered radial distance per bin, normalized so the farthest corner is 1.
// Row/column (H/2, W/2) is zero frequency.
inline Mat<double> radial_grid(int h, int w) {
  if (h < 2 || w < 2) throw std::invalid_argument("radial_grid: H and W must be at least 2");
  const double cy = h / 2;
  const double cx = w / 2;
  Mat<double> g(h, w);
  double max_r = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g(y, x) = std::hypot(y - cy, x - cx);
      max_r = std::max(max_r, g(y, x));
    }
  return g / max_r;
}

// radial_grid re-indexed to the unshifted layout fft2 produces.
inline Mat<double> bin_radius(int h, int w) {
  const Mat<double> g = radial_grid(h, w);
  Mat<double> r(h, w);
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) r(u, v) = g((u + h / 2) % h, (v + w / 2) % w);
  return r;
}

// Annulus m spans (r_{m-1}, r_m] with r_0 = 0 and the origin in the first
// annulus. Returns -1 beyond the outermost candidate.
inline int annulus_of(double radius, const std::vector<double>& candidates) {
  for (std::size_t m = 0; m < candidates.size(); ++m)
    if (radius <= candidates[m]) return static_cast<int>(m);
  return -1;
}

struct AnnulusEnergy {
  std::vector<double> total;  // Σ |X|^2 over bins, averaged over channels
  std::vector<int> count;     // bins per annulus
  double mean(std::size_t m) const { return count[m] > 0 ? total[m] / count[m] : 0.0; }
};

template <typename S>
AnnulusEnergy annulus_energy(const SpectralField<S>& spectrum, const std::vector<double>& candidates) {
  const Mat<double> radius = bin_radius(spectrum.height, spectrum.width);
  AnnulusEnergy e{std::vector<double>(candidates.size(), 0.0), std::vector<int>(candidates.size(), 0)};
  const int channels = spectrum.channels();
  for (int u = 0; u < spectrum.height; ++u)
    for (int v = 0; v < spectrum.width; ++v) {
      const int m = annulus_of(radius(u, v), candidates);
      if (m < 0) continue;
      const int bin = u * spectrum.width + v;
      double energy = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double re = value(spectrum.re(c, bin));
        const double im = value(spectrum.im(c, bin));
        energy += re * re + im * im;
      }
      e.total[m] += energy / channels;
      e.count[m] += 1;
    }
  return e;
}

// J_m = a * log(E_m + floor) + b with E_m the mean per-bin energy of annulus
// m. Energies are taken from the spectrum values; only a and b carry
// gradients.
template <typename S, typename T>
std::vector<T> score_profile(const SpectralField<S>& spectrum, const SoftGateConfig& cfg, const GateParams<T>& gp) {
  const AnnulusEnergy e = annulus_energy(spectrum, cfg.candidates);
  std::vector<T> j(cfg.candidates.size());
  for (std::size_t m = 0; m < j.size(); ++m) j[m] = gp.scale * std::log(e.mean(m) + kEnergyFloor) + gp.offset;
  return j;
}

template <typename S>
struct Cutoff {
  std::vector<S> weights;
  S cutoff;
};

template <typename S>
Cutoff<S> cutoff_expectation(const std::vector<S>& profile, const SoftGateConfig& cfg) {
  if (profile.size() != cfg.candidates.size()) throw std::invalid_argument("cutoff_expectation: profile length");
  std::vector<S> logits(profile.size());
  for (std::size_t m = 0; m < profile.size(); ++m) logits[m] = cfg.kappa * profile[m];
  Cutoff<S> out{stable_softmax<S>(logits), S(0.0)};
  if constexpr (std::is_same_v<S, Var>) {
    out.cutoff = ad::weighted_sum(cfg.candidates, out.weights);
  } else {
    for (std::size_t m = 0; m < profile.size(); ++m) out.cutoff += cfg.candidates[m] * out.weights[m];
  }
  return out;
}

// dc/dJ_m = kappa * p_m * (r_m - c).
inline std::vector<double> cutoff_sensitivity(const std::vector<double>& profile, const SoftGateConfig& cfg) {
  const Cutoff<double> e = cutoff_expectation(profile, cfg);
  std::vector<double> g(profile.size());
  for (std::size_t m = 0; m < g.size(); ++m) g[m] = cfg.kappa * e.weights[m] * (cfg.candidates[m] - e.cutoff);
  return g;
}

template <typename S>
struct Masks {
  Mat<S> low;
  Mat<S> high;
};

template <typename S>
Masks<S> build_masks(const S& cutoff, const Mat<double>& radius, const SoftGateConfig& cfg) {
  Masks<S> out{Mat<S>(radius.rows(), radius.cols()), Mat<S>(radius.rows(), radius.cols())};
  for (Eigen::Index i = 0; i < radius.size(); ++i) {
    if (cfg.mode == SoftGateConfig::Mode::kHard) {
      out.high(i) = radius(i) > cfg.hard_threshold ? 1.0 : 0.0;
    } else {
      out.high(i) = sigmoid((radius(i) - cutoff) / cfg.tau);
    }
    out.low(i) = 1.0 - out.high(i);
  }
  return out;
}

template <typename S>
struct Split {
  FeatureMap<S> high;
  FeatureMap<S> low;
  SoftGateState<S> state;
};

template <typename S>
SpectralField<S> apply_mask(const SpectralField<S>& x, const Mat<S>& mask) {
  SpectralField<S> out{x.height, x.width, Mat<S>(x.re.rows(), x.re.cols()), Mat<S>(x.im.rows(), x.im.cols())};
  for (Eigen::Index bin = 0; bin < x.re.cols(); ++bin) {
    const S& m = mask(bin / x.width, bin % x.width);
    for (Eigen::Index c = 0; c < x.re.rows(); ++c) {
      out.re(c, bin) = m * x.re(c, bin);
      out.im(c, bin) = m * x.im(c, bin);
    }
  }
  return out;
}

template <typename S, typename T>
Split<T> split(const FeatureMap<S>& feat, const SoftGateConfig& cfg, const GateParams<T>& gp) {
  const SpectralField<S> spectrum = fft2(feat);
  SoftGateState<T> state;
  state.profile = score_profile(spectrum, cfg, gp);
  Cutoff<T> cut = cutoff_expectation(state.profile, cfg);
  state.weights = std::move(cut.weights);
  state.cutoff = cfg.mode == SoftGateConfig::Mode::kHard ? T(cfg.hard_threshold) : cut.cutoff;
  Masks<T> masks = build_masks(state.cutoff, bin_radius(feat.height, feat.width), cfg);

  // Promote the spectrum to the gradient scalar once.
  SpectralField<T> x{spectrum.height, spectrum.width, spectrum.re.template cast<T>(), spectrum.im.template cast<T>()};
  Split<T> out{ifft2(apply_mask(x, masks.high)), ifft2(apply_mask(x, masks.low)), {}};
  state.mask_low = std::move(masks.low);
  state.mask_high = std::move(masks.high);
  out.state = std::move(state);
  return out;
}

}  // namespace harmoniad::softgate
