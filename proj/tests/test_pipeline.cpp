#include <gtest/gtest.h>

#include <cmath>

#include "harmoniad/params.hpp"
#include "harmoniad/pipeline.hpp"
#include "oracles.hpp"

namespace {

using namespace harmoniad;
using namespace harmoniad::pipeline;

ModelShape toy_shape(int c = 4, int h = 4, int w = 4) {
  ModelShape s;
  s.channels = c;
  s.height = h;
  s.width = w;
  s.head_dim = 2;
  s.rank = 2;
  s.mask_hidden = 2;
  return s;
}

TEST(Fusion, IdentityHeadsAdd) {
  Rng rng(1);
  const FeatureMap<double> a = oracle::random_map(3, 2, 2, rng);
  const FeatureMap<double> b = oracle::random_map(3, 2, 2, rng);
  const Vec<double> ones = Vec<double>::Ones(3);
  EXPECT_EQ(fuse_reconstruction(a, FeatureMap<double>(3, 2, 2), ones, ones).values, a.values);
  EXPECT_EQ(fuse_reconstruction(a, b, ones, ones).values, a.values + b.values);
  Vec<double> hh(3), hl(3);
  hh << 2.0, 0.0, -1.0;
  hl << 0.5, 1.0, 3.0;
  const FeatureMap<double> f = fuse_reconstruction(a, b, hh, hl);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(f.values(c, t), hh[c] * a.values(c, t) + hl[c] * b.values(c, t));
}

TEST(PatchScore, Examples) {
  FeatureMap<double> orig(2, 1, 3);
  orig.values << 1.0, 0.5, -2.0,
                 0.0, 1.0, 1.0;
  FeatureMap<double> recon = orig;
  EXPECT_EQ(patch_anomaly_score(recon, orig).cwiseAbs().maxCoeff(), 0.0);
  recon.values(0, 0) = 0.0;
  recon.values(1, 0) = 4.0;       // orthogonal to (1, 0)
  recon.values.col(1) *= -1.0;  // antiparallel
  const Mat<double> s = patch_anomaly_score(recon, orig);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(0, 1), 2.0);
  EXPECT_NEAR(s(0, 2), 0.0, 1e-15);
}

TEST(PatchScore, SymmetricAndScaleInvariant) {
  Rng rng(2);
  const FeatureMap<double> a = oracle::random_map(4, 3, 3, rng);
  const FeatureMap<double> b = oracle::random_map(4, 3, 3, rng);
  EXPECT_LT(patch_anomaly_score(a, a).maxCoeff(), 1e-15);
  const Mat<double> s = patch_anomaly_score(a, b);
  FeatureMap<double> scaled = a;
  for (int t = 0; t < 9; ++t) scaled.values.col(t) *= rng.uniform(0.1, 10.0);
  EXPECT_LT((patch_anomaly_score(scaled, b) - s).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((patch_anomaly_score(b, a) - s).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(s.minCoeff(), 0.0);
  EXPECT_LE(s.maxCoeff(), 2.0);
}

TEST(PixelMap, Examples) {
  const Mat<double> constant = Mat<double>::Constant(3, 3, 0.4);
  EXPECT_LT((pixel_map(constant, 24, 24).array() - 0.4).abs().maxCoeff(), 1e-15);

  Mat<double> m(2, 2);
  m << 0.0, 1.0,
       0.0, 1.0;
  EXPECT_EQ(pixel_map(m, 2, 2), m);

  // Half-pixel centers: output column x samples input coordinate (x + 0.5) / 2 - 0.5,
  // clamped to the input range.
  const Mat<double> up = pixel_map(m, 4, 4);
  const double expected[4] = {0.0, 0.25, 0.75, 1.0};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(up(y, x), expected[x]);
}

TEST(PixelMap, MatchesLonghandBilinear) {
  Rng rng(3);
  const Mat<double> m = oracle::random_matrix(3, 4, rng);
  const Mat<double> up = pixel_map(m, 12, 20);
  auto sample = [&](int y, int x) {
    const double fy = std::min(std::max((y + 0.5) * 3.0 / 12.0 - 0.5, 0.0), 2.0);
    const double fx = std::min(std::max((x + 0.5) * 4.0 / 20.0 - 0.5, 0.0), 3.0);
    const int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
    const int y1 = std::min(y0 + 1, 2), x1 = std::min(x0 + 1, 3);
    const double ay = fy - y0, ax = fx - x0;
    return (1 - ay) * (1 - ax) * m(y0, x0) + (1 - ay) * ax * m(y0, x1) + ay * (1 - ax) * m(y1, x0) +
           ay * ax * m(y1, x1);
  };
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 20; ++x) EXPECT_NEAR(up(y, x), sample(y, x), 1e-14);
  EXPECT_GE(up.minCoeff(), m.minCoeff());
  EXPECT_LE(up.maxCoeff(), m.maxCoeff());
  EXPECT_THROW(pixel_map(m, 2, 8), std::invalid_argument);
}

TEST(AnomalyMap, ImageScoreIsMaxPatch) {
  Rng rng(4);
  const Mat<double> s = oracle::random_matrix(4, 4, rng, 0.0, 2.0);
  const AnomalyMap a = anomaly_map(s, 32, 32);
  EXPECT_EQ(a.image_score, s.maxCoeff());
  EXPECT_EQ(a.pixel_scores.rows(), 32);
}

TEST(Loss, PerfectReconstructionOfNormalImage) {
  Rng rng(5);
  const FeatureMap<double> f = oracle::random_map(3, 4, 4, rng);
  const LossTerms<double> t = loss_terms(f, f, Mat<double>::Zero(4, 4));
  EXPECT_NEAR(t.n_cos, 0.0, 1e-15);
  EXPECT_EQ(t.a_cos, 0.0);
  EXPECT_EQ(t.an_cos, 0.0);
  EXPECT_EQ(t.far, 0.0);
  EXPECT_EQ(t.con, 0.0);
  EXPECT_EQ(t.tri, 0.0);
}

TEST(Loss, FarHingeExample) {
  FeatureMap<double> orig(2, 2, 2), recon(2, 2, 2);
  orig.values.setConstant(1.0);
  recon.values.setConstant(1.0);
  orig.values.col(0) << 1.0, 0.0;
  recon.values.col(0) << 0.9, std::sqrt(1.0 - 0.81);
  Mat<double> mask = Mat<double>::Zero(2, 2);
  mask(0, 0) = 1.0;
  const LossTerms<double> t = loss_terms(recon, orig, mask);
  EXPECT_NEAR(t.a_cos, 0.9, 1e-15);
  EXPECT_NEAR(t.far, 0.7, 1e-15);
  EXPECT_NEAR(t.an_cos, 0.0, 1e-15);
}

TEST(Loss, TripletWithExactAnchor) {
  Rng rng(6);
  const FeatureMap<double> orig = oracle::random_map(3, 3, 3, rng);
  FeatureMap<double> recon = orig;
  Mat<double> mask = Mat<double>::Zero(3, 3);
  mask(1, 1) = 1.0;
  mask(2, 2) = 1.0;
  recon.values.col(4) = oracle::random_matrix(3, 1, rng);
  recon.values.col(8) = oracle::random_matrix(3, 1, rng);
  const Vec<double> proto = 0.5 * (orig.values.col(4) + orig.values.col(8));
  double expected = 0.0;
  for (int t = 0; t < 9; ++t) {
    if (t == 4 || t == 8) continue;
    const Vec<double> a = orig.values.col(t);
    const double d_an = 1.0 - a.dot(proto) / (a.norm() * proto.norm());
    expected += std::max(0.0, 0.5 - d_an);
  }
  EXPECT_NEAR(loss_terms(recon, orig, mask).tri, expected / 7.0, 1e-14);
}

TEST(Loss, ContrastMatchesLonghand) {
  Rng rng(7);
  const FeatureMap<double> orig = oracle::random_map(2, 1, 4, rng);
  const FeatureMap<double> recon = oracle::random_map(2, 1, 4, rng);
  Mat<double> mask = Mat<double>::Zero(1, 4);
  mask(0, 3) = 1.0;
  LossSettings settings;
  settings.contrast_radius = 1.0;
  // Anchors 0,1,2; positives are normal neighbors at distance 1, the negative is token 3.
  auto unit = [&](int t) { return Vec<double>(recon.values.col(t).normalized()); };
  auto sim = [&](int i, int j) { return unit(i).dot(unit(j)) / 0.1; };
  const std::vector<std::vector<int>> positives{{1}, {0, 2}, {1}};
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    double pos = 0.0;
    for (int j : positives[i]) pos += std::exp(sim(i, j));
    expected += std::log(pos + std::exp(sim(i, 3))) - std::log(pos);
  }
  EXPECT_NEAR(loss_terms(recon, orig, mask, settings).con, expected / 3.0, 1e-12);
}

TEST(Loss, AnchorsNeedNormalNeighbors) {
  Mat<double> mask = Mat<double>::Ones(3, 3);
  mask(0, 0) = 0.0;
  EXPECT_TRUE(pipeline::detail::contrast_anchors(mask, 2.0).empty());
  mask(2, 2) = 0.0;
  EXPECT_TRUE(pipeline::detail::contrast_anchors(mask, 2.0).empty());
  EXPECT_EQ(pipeline::detail::contrast_anchors(mask, 3.0).size(), 2u);
  EXPECT_TRUE(pipeline::detail::contrast_anchors(Mat<double>::Zero(3, 3), 2.0).empty());
}

TEST(TotalLoss, ExamplesAndLinearity) {
  const LossTerms<double> t{0.3, 0.2, 0.9, 0.1, 1.7, 0.4};
  LossWeights zero{0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(total_loss(t, zero, 5.0), 0.0);
  LossWeights reg_only = zero;
  reg_only.reg = 1.0;
  EXPECT_EQ(total_loss(t, reg_only, 2.5), 2.5);

  Rng rng(8);
  LossWeights w{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
  const double longhand =
      w.n * 0.3 + w.a * 0.2 + w.an * 0.9 + w.far * 0.1 + w.con * 1.7 + w.tri * 0.4 + w.reg * 3.0;
  EXPECT_NEAR(total_loss(t, w, 3.0), longhand, 1e-14);
  LossWeights doubled = w;
  doubled.con *= 2.0;
  EXPECT_NEAR(total_loss(t, doubled, 3.0) - total_loss(t, w, 3.0), w.con * 1.7, 1e-14);
}

TEST(Forward, DeterministicAndShaped) {
  const ModelShape shape = toy_shape(16, 8, 8);
  const ModelParams p = init_params(shape, 3);
  Rng rng(9);
  const FeatureMap<double> x = oracle::random_map(16, 8, 8, rng);
  const Weights<double> w = unpack(p);
  const Forward<double> a = forward(x, w, PipelineConfig{});
  const Forward<double> b = forward(x, w, PipelineConfig{});
  EXPECT_EQ(a.recon.values, b.recon.values);
  EXPECT_EQ(a.recon.channels(), 16);
  const AnomalyMap m = anomaly_map(patch_anomaly_score(a.recon, x), 64, 64);
  EXPECT_EQ(m.patch_scores.rows(), 8);
  EXPECT_EQ(m.patch_scores.cols(), 8);
  EXPECT_TRUE(m.pixel_scores.allFinite());
}

TEST(Forward, IdentityPathsReproduceInput) {
  const ModelParams p = init_params(toy_shape(), 5);
  Rng rng(10);
  const FeatureMap<double> x = oracle::random_map(4, 4, 4, rng);
  PipelineConfig cfg;
  cfg.use_fsam = false;
  cfg.use_gscm = false;
  const Forward<double> f = forward(x, unpack(p), cfg);
  EXPECT_LT((f.recon.values - x.values).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(patch_anomaly_score(f.recon, x).maxCoeff(), 1e-12);
}

TEST(Forward, ZeroLowBranchLeavesHighBranch) {
  ModelParams p = init_params(toy_shape(), 6);
  for (double& v : p.view("heads.low")) v = 0.0;
  Rng rng(11);
  const FeatureMap<double> x = oracle::random_map(4, 4, 4, rng);
  const Forward<double> f = forward(x, unpack(p), PipelineConfig{});
  EXPECT_EQ(f.recon.values, f.high.values);
}

TEST(Forward, VarPathMatchesDoublePath) {
  const ModelParams p = init_params(toy_shape(), 7);
  Rng rng(12);
  const FeatureMap<double> x = oracle::random_map(4, 4, 4, rng);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<Var> flat;
  for (double v : p.values()) flat.push_back(Var::leaf(v));
  const Forward<Var> fv = forward(x, unpack<Var>(p, std::span<const Var>(flat)), PipelineConfig{});
  const Forward<double> fd = forward(x, unpack(p), PipelineConfig{});
  EXPECT_LT((values_of(fv.recon.values) - fd.recon.values).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace
