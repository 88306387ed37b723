#include <algorithm>
#include <array>
#include <cmath>

#include "harmoniad/training.hpp"

namespace harmoniad::training {

namespace {

// Fixed per-filter gains bringing the filter outputs to comparable ranges
// on [0,1] images.
constexpr std::array<double, kEncoderBankSize> kGains = {1.0, 2.0, 4.0, 4.0, 4.0, 4.0, 2.0, 2.0,
                                                         2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 1.0, 1.0};

std::array<double, kEncoderBankSize> filter_bank(const Mat<double>& img, int y0, int x0, int p) {
  auto px = [&](int y, int x) { return img(y0 + y, x0 + x); };
  const double n = static_cast<double>(p) * p;
  double mean = 0.0, lo = px(0, 0), hi = px(0, 0), checker = 0.0;
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) {
      const double v = px(y, x);
      mean += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      checker += ((x + y) % 2 == 0 ? v : -v);
    }
  mean /= n;
  checker /= n;

  double var = 0.0;
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) var += (px(y, x) - mean) * (px(y, x) - mean);
  var /= n;

  double dh = 0.0, dv = 0.0, dd = 0.0, da = 0.0;
  double adh = 0.0, adv = 0.0, add = 0.0, ada = 0.0;
  for (int y = 0; y < p; ++y)
    for (int x = 0; x + 1 < p; ++x) {
      const double d = px(y, x + 1) - px(y, x);
      dh += d;
      adh += std::abs(d);
    }
  for (int y = 0; y + 1 < p; ++y)
    for (int x = 0; x < p; ++x) {
      const double d = px(y + 1, x) - px(y, x);
      dv += d;
      adv += std::abs(d);
    }
  for (int y = 0; y + 1 < p; ++y)
    for (int x = 0; x + 1 < p; ++x) {
      const double d1 = px(y + 1, x + 1) - px(y, x);
      const double d2 = px(y + 1, x) - px(y, x + 1);
      dd += d1;
      add += std::abs(d1);
      da += d2;
      ada += std::abs(d2);
    }
  const double n_h = static_cast<double>(p) * (p - 1);
  const double n_d = static_cast<double>(p - 1) * (p - 1);

  double center = 0.0, ring = 0.0, left = 0.0, right = 0.0, top = 0.0, bottom = 0.0;
  const int q = p / 4;
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) {
      const double v = px(y, x);
      const bool inner = y >= q && y < p - q && x >= q && x < p - q;
      (inner ? center : ring) += v;
      (x < p / 2 ? left : right) += v;
      (y < p / 2 ? top : bottom) += v;
    }
  const double n_inner = static_cast<double>(p - 2 * q) * (p - 2 * q);
  const double n_ring = n - n_inner;
  const double half = n / 2.0;

  double lap = 0.0;
  int n_lap = 0;
  for (int y = 1; y + 1 < p; ++y)
    for (int x = 1; x + 1 < p; ++x) {
      lap += std::abs(px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1) - 4.0 * px(y, x));
      ++n_lap;
    }

  return {mean,
          std::sqrt(var),
          dh / n_h,
          dv / n_h,
          dd / n_d,
          da / n_d,
          adh / n_h,
          adv / n_h,
          add / n_d,
          ada / n_d,
          n_ring > 0.0 ? center / n_inner - ring / n_ring : 0.0,
          (left - right) / half,
          (top - bottom) / half,
          checker,
          n_lap > 0 ? lap / n_lap : 0.0,
          hi - lo};
}

}  // namespace

FeatureMap<double> stub_encoder(const Mat<double>& image, int channels, int patch) {
  if (patch < 4) throw std::invalid_argument("stub_encoder: patch must be at least 4 pixels");
  if (channels < 1 || channels > kEncoderBankSize) {
    throw std::invalid_argument("stub_encoder: channels must be in [1, " + std::to_string(kEncoderBankSize) + "]");
  }
  if (image.rows() % patch != 0 || image.cols() % patch != 0) {
    throw std::invalid_argument("stub_encoder: image size must be divisible by the patch size");
  }
  const int gh = static_cast<int>(image.rows()) / patch;
  const int gw = static_cast<int>(image.cols()) / patch;
  FeatureMap<double> f(channels, gh, gw);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      const auto bank = filter_bank(image, gy * patch, gx * patch, patch);
      for (int c = 0; c < channels; ++c) f.at(c, gy, gx) = kGains[c] * bank[c];
    }
  return f;
}

}  // namespace harmoniad::training
