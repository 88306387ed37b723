#include <gtest/gtest.h>

#include <cmath>

#include "harmoniad/fsam.hpp"
#include "oracles.hpp"

namespace {

using namespace harmoniad;
using namespace harmoniad::fsam;

// Straight-line softmax(q k^T / sqrt(d) + b) v.
Mat<double> brute_attention(const Mat<double>& q, const Mat<double>& k, const Mat<double>& v, const Mat<double>& b) {
  Mat<double> out = Mat<double>::Zero(q.rows(), v.cols());
  const double d = static_cast<double>(q.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> logits;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index t = 0; t < q.cols(); ++t) s += q(i, t) * k(j, t);
      logits.push_back(s / std::sqrt(d) + (b.size() ? b(i, j) : 0.0));
    }
    const std::vector<double> p = oracle::softmax(logits);
    for (Eigen::Index j = 0; j < k.rows(); ++j)
      for (Eigen::Index t = 0; t < v.cols(); ++t) out(i, t) += p[j] * v(j, t);
  }
  return out;
}

FsamParams<double> random_params(int c, int d, Rng& rng) {
  FsamParams<double> p;
  p.w_q = oracle::random_matrix(c, d, rng, -0.5, 0.5);
  p.w_k = oracle::random_matrix(c, d, rng, -0.5, 0.5);
  p.w_v = oracle::random_matrix(c, c, rng, -0.5, 0.5);
  p.e_theta = oracle::random_matrix(4, 1, rng, -0.2, 0.2);
  p.mask = {oracle::random_matrix(c, 3, rng), Mat<double>::Zero(c, 3), oracle::random_matrix(c, 3, rng),
            Vec<double>::Zero(c)};
  p.blend = Vec<double>::Zero(c);
  return p;
}

TEST(OffsetDescriptor, Examples) {
  const auto same = offset_descriptor({4, 1}, {4, 1});
  for (double v : same) EXPECT_EQ(v, 0.0);
  const auto d = offset_descriptor({2, 3}, {0, 5});
  EXPECT_EQ(d[0], 2.0);
  EXPECT_EQ(d[1], -2.0);
  EXPECT_EQ(d[2], 2.0);
  EXPECT_EQ(d[3], 2.0);
}

TEST(BiasMatrix, Examples) {
  const auto pos = grid_positions(3, 3);
  EXPECT_EQ(bias_matrix<double>(pos, pos, Vec<double>::Zero(4)).cwiseAbs().maxCoeff(), 0.0);
  Vec<double> e(4);
  e << 1.0, 0.0, 0.0, 0.0;
  const Mat<double> b = bias_matrix<double>({{3, 0}}, {{1, 0}}, e);
  EXPECT_EQ(b(0, 0), 2.0);
}

TEST(BiasMatrix, MatchesLonghand) {
  Rng rng(31);
  const Vec<double> e = oracle::random_matrix(4, 1, rng);
  const auto pos = grid_positions(2, 3);
  const Mat<double> b = bias_matrix<double>(pos, pos, e);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const double dx = (i % 3) - (j % 3);
      const double dy = (i / 3) - (j / 3);
      EXPECT_NEAR(b(i, j), e[0] * dx + e[1] * dy + e[2] * std::abs(dx) + e[3] * std::abs(dy), 1e-15);
    }
  EXPECT_THROW(bias_matrix<double>(pos, pos, Vec<double>::Zero(3)), std::invalid_argument);
}

TEST(Attention, SingleKeyReturnsItsValue) {
  Rng rng(1);
  const Mat<double> q = oracle::random_matrix(3, 2, rng);
  const Mat<double> k = oracle::random_matrix(1, 2, rng);
  const Mat<double> v = oracle::random_matrix(1, 2, rng);
  const Mat<double> b = oracle::random_matrix(3, 1, rng, -10.0, 10.0);
  const Mat<double> out = f2s_attention(q, k, v, b);
  for (int i = 0; i < 3; ++i) EXPECT_LT((out.row(i) - v.row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, SaturatedBiasSelectsColumn) {
  Rng rng(2);
  const Mat<double> q = oracle::random_matrix(2, 3, rng);
  const Mat<double> k = oracle::random_matrix(4, 3, rng);
  const Mat<double> v = oracle::random_matrix(4, 3, rng);
  Mat<double> b = Mat<double>::Zero(2, 4);
  b.col(2).setConstant(1e6);
  const Mat<double> out = f2s_attention(q, k, v, b);
  for (int i = 0; i < 2; ++i) EXPECT_LT((out.row(i) - v.row(2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, MatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int nf = 1 + static_cast<int>(rng.index(4));
    const int ns = 1 + static_cast<int>(rng.index(4));
    const int d = 1 + static_cast<int>(rng.index(3));
    const Mat<double> q = oracle::random_matrix(nf, d, rng, -2.0, 2.0);
    const Mat<double> k = oracle::random_matrix(ns, d, rng, -2.0, 2.0);
    const Mat<double> v = oracle::random_matrix(ns, d, rng, -2.0, 2.0);
    const Mat<double> b = oracle::random_matrix(nf, ns, rng, -2.0, 2.0);
    EXPECT_LT((f2s_attention(q, k, v, b) - brute_attention(q, k, v, b)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((f2s_attention(q, k, v, Mat<double>()) - brute_attention(q, k, v, Mat<double>())).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Attention, RejectsShapeMismatch) {
  const Mat<double> q = Mat<double>::Zero(2, 3);
  EXPECT_THROW(f2s_attention<double>(q, Mat<double>::Zero(2, 2), Mat<double>::Zero(2, 2), Mat<double>()),
               std::invalid_argument);
  EXPECT_THROW(f2s_attention<double>(q, Mat<double>::Zero(2, 3), Mat<double>::Zero(2, 2), Mat<double>::Zero(1, 1)),
               std::invalid_argument);
}

TEST(AmplitudeModulation, ZeroMaskAnnihilates) {
  Rng rng(5);
  const SpectralField<double> x = fft2(oracle::random_map(2, 4, 4, rng));
  const SpectralField<double> y = amplitude_modulation<double>(x, Mat<double>::Zero(2, 16), 1e-3);
  EXPECT_EQ(y.re.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(y.im.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AmplitudeModulation, IdentityLimit) {
  Rng rng(6);
  const SpectralField<double> x = fft2(oracle::random_map(2, 4, 4, rng));
  const Mat<double> ones = Mat<double>::Ones(2, 16);
  double previous = std::numeric_limits<double>::infinity();
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const SpectralField<double> y = amplitude_modulation(x, ones, eps, Sigma::kIdentity);
    const double err = std::max((y.re - x.re).cwiseAbs().maxCoeff(), (y.im - x.im).cwiseAbs().maxCoeff());
    EXPECT_LT(err, previous);
    previous = err;
  }
  EXPECT_LT(previous, 1e-7);
}

TEST(AmplitudeModulation, PreservesPhaseAndSetsAmplitude) {
  Rng rng(7);
  const int bins = 1000;
  SpectralField<double> x{1, bins, oracle::random_matrix(1, bins, rng, -3.0, 3.0),
                          oracle::random_matrix(1, bins, rng, -3.0, 3.0)};
  const Mat<double> mask = oracle::random_matrix(1, bins, rng, 0.0, 4.0);
  const double eps = 1e-3;
  const SpectralField<double> y = amplitude_modulation(x, mask, eps);
  for (int b = 0; b < bins; ++b) {
    const double a = std::hypot(x.re(0, b), x.im(0, b));
    ASSERT_GT(a, 1e-6);
    const double dphi = std::remainder(std::atan2(y.im(0, b), y.re(0, b)) - std::atan2(x.im(0, b), x.re(0, b)),
                                       2.0 * std::numbers::pi);
    EXPECT_LT(std::abs(dphi), 1e-9);
    const double expected = mask(0, b) * std::log1p(std::exp(a)) * a / (a + eps);
    EXPECT_NEAR(std::hypot(y.re(0, b), y.im(0, b)), expected, 1e-12 * (1.0 + expected));
  }
}

TEST(AmplitudeModulation, RejectsBadArguments) {
  SpectralField<double> x{2, 2, Mat<double>::Zero(1, 4), Mat<double>::Zero(1, 4)};
  EXPECT_THROW(amplitude_modulation<double>(x, Mat<double>::Ones(1, 4), 0.0), std::invalid_argument);
  EXPECT_THROW(amplitude_modulation<double>(x, Mat<double>::Ones(1, 3), 1e-3), std::invalid_argument);
}

TEST(MaskGenerator, NonnegativeAndMatchesLonghand) {
  Rng rng(8);
  MaskGenerator<double> g{oracle::random_matrix(2, 3, rng), oracle::random_matrix(2, 3, rng),
                          oracle::random_matrix(2, 3, rng, -3.0, 3.0), oracle::random_matrix(2, 1, rng)};
  const Mat<double> amp = oracle::random_matrix(2, 5, rng, 0.0, 10.0);
  const Mat<double> m = generate_mask(amp, g);
  for (int c = 0; c < 2; ++c)
    for (int b = 0; b < 5; ++b) {
      const double f = std::log(1.0 + amp(c, b));
      double s = g.b2[c];
      for (int k = 0; k < 3; ++k) {
        const double z = g.w1(c, k) * f + g.b1(c, k);
        s += g.w2(c, k) * z / (1.0 + std::exp(-z));
      }
      EXPECT_NEAR(m(c, b), std::log1p(std::exp(s)), 1e-14);
      EXPECT_GE(m(c, b), 0.0);
    }
}

TEST(FsamForward, ZeroInputGivesZeroOutput) {
  Rng rng(9);
  const FsamParams<double> p = random_params(3, 2, rng);
  const FeatureMap<double> out = fsam_forward(FeatureMap<double>(3, 4, 4), p);
  EXPECT_EQ(out.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FsamForward, IdentityConfiguration) {
  Rng rng(10);
  const int c = 4;
  FsamParams<double> p = random_params(c, 2, rng);
  p.mask.w1.setZero();
  p.mask.w2.setZero();
  p.mask.b2.setConstant(std::log(std::exp(1.0) - 1.0));
  p.w_v = Mat<double>::Identity(c, c);
  p.e_theta.setZero();
  FsamOptions opt;
  opt.sigma = Sigma::kIdentity;
  opt.eps = 1e-9;
  const FeatureMap<double> x = oracle::random_map(c, 1, 1, rng, 0.5, 2.0);
  for (double blend : {-2.0, 0.0, 3.0}) {
    p.blend.setConstant(blend);
    EXPECT_LT((fsam_forward(x, p, opt).values - x.values).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(FsamForward, BlendInterpolatesBetweenModulatedAndAttended) {
  Rng rng(11);
  FsamParams<double> p = random_params(3, 2, rng);
  const FeatureMap<double> x = oracle::random_map(3, 4, 4, rng);
  p.blend.setConstant(-60.0);
  const FeatureMap<double> pass = fsam_forward(x, p);
  const SpectralField<double> spec = fft2(x);
  const FeatureMap<double> modulated =
      ifft2(amplitude_modulation(spec, generate_mask(amplitudes(spec), p.mask), 1e-3));
  EXPECT_LT((pass.values - modulated.values).cwiseAbs().maxCoeff(), 1e-12);

  p.blend.setConstant(60.0);
  const FeatureMap<double> att = fsam_forward(x, p);
  const Mat<double> q = modulated.values.transpose() * p.w_q;
  const Mat<double> k = x.values.transpose() * p.w_k;
  const Mat<double> v = x.values.transpose() * p.w_v;
  const auto pos = grid_positions(4, 4);
  const Mat<double> ref = brute_attention(q, k, v, bias_matrix(pos, pos, p.e_theta));
  EXPECT_LT((att.values - ref.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FsamForward, PreservesShape) {
  Rng rng(12);
  for (auto [c, h, w] : {std::tuple{2, 4, 4}, std::tuple{3, 2, 8}, std::tuple{1, 3, 5}}) {
    const FeatureMap<double> out = fsam_forward(oracle::random_map(c, h, w, rng), random_params(c, 2, rng));
    EXPECT_EQ(out.channels(), c);
    EXPECT_EQ(out.height, h);
    EXPECT_EQ(out.width, w);
    EXPECT_TRUE(out.values.allFinite());
  }
}

}  // namespace
