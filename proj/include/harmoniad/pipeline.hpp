#pragma once

// End-to-end model: frequency split, the two branches, fused
// reconstruction, anomaly scoring and the training objective.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "harmoniad/fsam.hpp"
#include "harmoniad/gscm.hpp"
#include "harmoniad/numerics.hpp"
#include "harmoniad/params.hpp"
#include "harmoniad/softgate.hpp"

namespace harmoniad::pipeline {

struct PipelineConfig {
  softgate::SoftGateConfig gate = softgate::SoftGateConfig::defaults();
  fsam::FsamOptions fsam;
  gscm::GscmOptions gscm;
  bool use_fsam = true;
  bool use_gscm = true;
};

// P_h(F_high) + P_l(F_low) with per-channel scale heads.
template <typename S>
FeatureMap<S> fuse_reconstruction(const FeatureMap<S>& high_hat, const FeatureMap<S>& low_hat, const Vec<S>& head_high,
                                  const Vec<S>& head_low) {
  if (high_hat.values.rows() != low_hat.values.rows() || high_hat.values.cols() != low_hat.values.cols()) {
    throw std::invalid_argument("fuse_reconstruction: branch shapes differ");
  }
  FeatureMap<S> out(high_hat.channels(), high_hat.height, high_hat.width);
  for (int t = 0; t < out.tokens(); ++t)
    for (int c = 0; c < out.channels(); ++c)
      out.values(c, t) = head_high[c] * high_hat.values(c, t) + head_low[c] * low_hat.values(c, t);
  return out;
}

template <typename S>
struct Forward {
  FeatureMap<S> recon;
  FeatureMap<S> high;
  FeatureMap<S> low;
  softgate::SoftGateState<S> gate;
};

template <typename S>
Forward<S> forward(const FeatureMap<double>& feat, const Weights<S>& w, const PipelineConfig& cfg) {
  softgate::Split<S> parts = softgate::split(feat, cfg.gate, w.gate);
  FeatureMap<S> high_hat = cfg.use_fsam ? fsam::fsam_forward(parts.high, w.fsam, cfg.fsam) : parts.high;
  FeatureMap<S> low_hat = cfg.use_gscm ? gscm::gscm_forward(parts.low, w.gscm, cfg.gscm) : parts.low;
  Forward<S> out;
  out.recon = fuse_reconstruction(high_hat, low_hat, w.head_high, w.head_low);
  out.high = std::move(high_hat);
  out.low = std::move(low_hat);
  out.gate = std::move(parts.state);
  return out;
}

// 1 - cos per cell; 0 where both vectors vanish.
template <typename S>
Mat<double> patch_anomaly_score(const FeatureMap<S>& recon, const FeatureMap<S>& original) {
  if (recon.values.rows() != original.values.rows() || recon.values.cols() != original.values.cols()) {
    throw std::invalid_argument("patch_anomaly_score: shape mismatch");
  }
  const Mat<double> r = values_of(recon.values);
  const Mat<double> o = values_of(original.values);
  Mat<double> s(recon.height, recon.width);
  for (int t = 0; t < recon.tokens(); ++t) {
    const double cos = cosine_similarity(&r(0, t), 1, &o(0, t), 1, r.rows());
    s(t / recon.width, t % recon.width) = std::clamp(1.0 - cos, 0.0, 2.0);
  }
  return s;
}

// Bilinear upsampling with half-pixel centers (align_corners = false).
Mat<double> pixel_map(const Mat<double>& patch_scores, int out_h, int out_w);

struct AnomalyMap {
  Mat<double> patch_scores;
  Mat<double> pixel_scores;
  double image_score = 0.0;
};

AnomalyMap anomaly_map(const Mat<double>& patch_scores, int image_h, int image_w);

// ---------------------------------------------------------------------------
// Training objective.

struct LossWeights {
  double n = 1.0;
  double a = 1.0;
  double con = 1.0;
  double an = 1.0;
  double far = 1.0;
  double tri = 1.0;
  double reg = 1e-4;
};

struct LossSettings {
  double margin_far = 0.2;
  double margin_tri = 0.5;
  double temperature = 0.1;
  double contrast_radius = 2.0;
};

template <typename S>
struct LossTerms {
  S n_cos = 0.0;   // 1 - cos over patches of normal images
  S a_cos = 0.0;   // cos over abnormal patches
  S an_cos = 0.0;  // 1 - cos over normal patches of anomalous images
  S far = 0.0;     // hinge on cos over abnormal patches
  S con = 0.0;     // spatially-aware contrastive term
  S tri = 0.0;     // triplet term
};

// Normalizers of each term. They depend only on the patch mask, so batch
// means can be assembled from independently differentiated samples.
struct TermCounts {
  double n = 0.0;
  double a = 0.0;
  double an = 0.0;
  double far = 0.0;
  double con = 0.0;
  double tri = 0.0;

  TermCounts& operator+=(const TermCounts& o) {
    n += o.n;
    a += o.a;
    an += o.an;
    far += o.far;
    con += o.con;
    tri += o.tri;
    return *this;
  }
};

namespace detail {

inline bool within_radius(int ti, int tj, int w, double radius) {
  const double dy = ti / w - tj / w;
  const double dx = ti % w - tj % w;
  return dx * dx + dy * dy <= radius * radius;
}

// Anchors of the contrastive term: normal patches with at least one normal
// neighbor inside the radius, in images that have abnormal patches.
inline std::vector<int> contrast_anchors(const Mat<double>& mask, double radius) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<int> anchors;
  if (mask.sum() == 0.0) return anchors;
  for (int i = 0; i < h * w; ++i) {
    if (mask(i / w, i % w) != 0.0) continue;
    for (int j = 0; j < h * w; ++j) {
      if (j != i && mask(j / w, j % w) == 0.0 && within_radius(i, j, w, radius)) {
        anchors.push_back(i);
        break;
      }
    }
  }
  return anchors;
}

}  // namespace detail

inline TermCounts term_counts(const Mat<double>& mask, const LossSettings& settings = {}) {
  TermCounts k;
  const double abnormal = mask.sum();
  const double total = static_cast<double>(mask.size());
  if (abnormal == 0.0) {
    k.n = total;
  } else {
    k.a = abnormal;
    k.far = abnormal;
    k.an = total - abnormal;
    k.tri = total - abnormal;
    k.con = static_cast<double>(detail::contrast_anchors(mask, settings.contrast_radius).size());
  }
  return k;
}

// Unnormalized sums of every term for one sample; divide by TermCounts.
template <typename S>
LossTerms<S> loss_sums(const FeatureMap<S>& recon, const FeatureMap<double>& original, const Mat<double>& mask,
                       const LossSettings& settings = {}) {
  using std::exp;
  using std::log;
  using std::sqrt;
  const int w = recon.width;
  const int tokens = recon.tokens();
  const Eigen::Index c = recon.values.rows();
  if (mask.rows() != recon.height || mask.cols() != recon.width) throw std::invalid_argument("loss: mask shape");
  auto abnormal = [&](int t) { return mask(t / w, t % w) != 0.0; };

  const Mat<S> orig = original.values.template cast<S>();
  std::vector<S> cos_ro(static_cast<std::size_t>(tokens));
  for (int t = 0; t < tokens; ++t) cos_ro[t] = cosine_similarity(&recon.values(0, t), 1, &orig(0, t), 1, c);

  LossTerms<S> sums;
  std::vector<S> acc_n, acc_a, acc_an, acc_far, acc_con, acc_tri;
  const bool anomalous = mask.sum() != 0.0;
  for (int t = 0; t < tokens; ++t) {
    if (!anomalous) {
      acc_n.push_back(1.0 - cos_ro[t]);
    } else if (abnormal(t)) {
      acc_a.push_back(cos_ro[t]);
      acc_far.push_back(relu(cos_ro[t] - settings.margin_far));
    } else {
      acc_an.push_back(1.0 - cos_ro[t]);
    }
  }

  if (anomalous) {
    // Unit-normalized reconstructions for the contrastive similarities.
    Mat<S> unit(c, tokens);
    for (int t = 0; t < tokens; ++t) {
      const S nrm = sqrt(dot(&recon.values(0, t), 1, &recon.values(0, t), 1, c));
      for (Eigen::Index k = 0; k < c; ++k) unit(k, t) = value(nrm) > 0.0 ? recon.values(k, t) / nrm : S(0.0);
    }
    std::vector<int> negatives;
    for (int t = 0; t < tokens; ++t)
      if (abnormal(t)) negatives.push_back(t);

    for (int i : detail::contrast_anchors(mask, settings.contrast_radius)) {
      std::vector<S> pos_logits;
      std::vector<S> all_logits;
      for (int j = 0; j < tokens; ++j) {
        if (j == i) continue;
        const bool is_pos = !abnormal(j) && detail::within_radius(i, j, w, settings.contrast_radius);
        if (!is_pos && !abnormal(j)) continue;
        const S logit = dot(&unit(0, i), 1, &unit(0, j), 1, c) / settings.temperature;
        if (is_pos) pos_logits.push_back(logit);
        all_logits.push_back(logit);
      }
      double peak = value(all_logits[0]);
      for (const S& l : all_logits) peak = std::max(peak, value(l));
      auto log_sum_exp = [&](std::vector<S>& ls) {
        for (S& l : ls) l = exp(l - peak);
        return log(sum<S>(ls)) + peak;
      };
      acc_con.push_back(log_sum_exp(all_logits) - log_sum_exp(pos_logits));
    }

    // Triplet: anchor = reconstruction of a normal patch, positive = its
    // original, negative = the mean original of the abnormal patches.
    Vec<double> proto = Vec<double>::Zero(c);
    for (int t : negatives) proto += original.values.col(t);
    proto /= static_cast<double>(negatives.size());
    const Vec<S> proto_s = proto.template cast<S>();
    for (int t = 0; t < tokens; ++t) {
      if (abnormal(t)) continue;
      const S d_ap = 1.0 - cos_ro[t];
      const S d_an = 1.0 - cosine_similarity(&recon.values(0, t), 1, proto_s.data(), 1, c);
      acc_tri.push_back(relu(d_ap - d_an + settings.margin_tri));
    }
  }

  sums.n_cos = sum<S>(acc_n);
  sums.a_cos = sum<S>(acc_a);
  sums.an_cos = sum<S>(acc_an);
  sums.far = sum<S>(acc_far);
  sums.con = sum<S>(acc_con);
  sums.tri = sum<S>(acc_tri);
  return sums;
}

// Divides sums by counts; empty sets contribute 0.
template <typename S>
LossTerms<S> normalize(const LossTerms<S>& sums, const TermCounts& k) {
  auto div = [](const S& s, double n) { return n > 0.0 ? s / n : S(0.0); };
  return {div(sums.n_cos, k.n), div(sums.a_cos, k.a),     div(sums.an_cos, k.an),
          div(sums.far, k.far), div(sums.con, k.con), div(sums.tri, k.tri)};
}

// Per-sample means of the six terms.
template <typename S>
LossTerms<S> loss_terms(const FeatureMap<S>& recon, const FeatureMap<double>& original, const Mat<double>& mask,
                        const LossSettings& settings = {}) {
  return normalize(loss_sums(recon, original, mask, settings), term_counts(mask, settings));
}

// Weighted sum of the six terms without the regularizer.
template <typename S>
S weighted_terms(const LossTerms<S>& t, const LossWeights& w) {
  return w.n * t.n_cos + w.a * t.a_cos + w.con * t.con + w.an * t.an_cos + w.far * t.far + w.tri * t.tri;
}

template <typename S>
S total_loss(const LossTerms<S>& t, const LossWeights& w, const S& params_norm_sq) {
  return weighted_terms(t, w) + w.reg * params_norm_sq;
}

}  // namespace harmoniad::pipeline
