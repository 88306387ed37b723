#include <algorithm>
#include <cmath>
#include <numbers>

#include "harmoniad/training.hpp"

namespace harmoniad::training {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Mat<double> stripes(int size, int class_id, Rng& rng) {
  const int variant = class_id / 3;
  const double period = 6.0 + 2.0 * ((class_id * 5 + variant) % 4);
  const double angle = std::numbers::pi * ((class_id * 37) % 180) / 180.0;
  const double phase = rng.uniform(0.0, kTwoPi);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat<double> img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) img(y, x) = 0.5 + 0.3 * std::sin(kTwoPi * (x * c + y * s) / period + phase);
  return img;
}

Mat<double> checker(int size, int class_id, Rng& rng) {
  const int cell = 4 + 2 * ((class_id / 3) % 3);
  const int oy = static_cast<int>(rng.index(static_cast<std::uint64_t>(2 * cell)));
  const int ox = static_cast<int>(rng.index(static_cast<std::uint64_t>(2 * cell)));
  Mat<double> img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) img(y, x) = (((y + oy) / cell + (x + ox) / cell) % 2 == 0) ? 0.3 : 0.7;
  return img;
}

Mat<double> blobs(int size, int class_id, Rng& rng) {
  const double spacing = 10.0 + 2.0 * ((class_id / 3) % 3);
  const double sigma = spacing / 4.0;
  const double oy = rng.uniform(0.0, spacing);
  const double ox = rng.uniform(0.0, spacing);
  Mat<double> img = Mat<double>::Constant(size, size, 0.25);
  for (double cy = oy - spacing; cy < size + spacing; cy += spacing)
    for (double cx = ox - spacing; cx < size + spacing; cx += spacing) {
      const double jy = cy + rng.uniform(-1.0, 1.0);
      const double jx = cx + rng.uniform(-1.0, 1.0);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double d2 = (y - jy) * (y - jy) + (x - jx) * (x - jx);
          img(y, x) += 0.5 * std::exp(-d2 / (2.0 * sigma * sigma));
        }
    }
  return img;
}

void clamp01(Mat<double>& img) { img = img.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

Mat<double> render_texture(int class_id, int size, Rng& rng) {
  switch (class_id % 3) {
    case 0:
      return stripes(size, class_id, rng);
    case 1:
      return checker(size, class_id, rng);
    default:
      return blobs(size, class_id, rng);
  }
}

Mat<double> inject_defect(Mat<double>& image, int class_id, int n_classes, Rng& rng) {
  const int size = static_cast<int>(image.rows());
  Mat<double> mask = Mat<double>::Zero(size, size);
  const auto kind = static_cast<DefectKind>(rng.index(3));
  switch (kind) {
    case DefectKind::kSpot: {
      const double radius = rng.uniform(3.0, 6.0);
      const double cy = rng.uniform(radius, size - radius);
      const double cx = rng.uniform(radius, size - radius);
      const double delta = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.35, 0.5);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius) {
            image(y, x) += delta;
            mask(y, x) = 1.0;
          }
      break;
    }
    case DefectKind::kScratch: {
      const double length = rng.uniform(12.0, 24.0);
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double half_width = rng.uniform(0.5, 1.0);
      const double cy = rng.uniform(length / 2, size - length / 2);
      const double cx = rng.uniform(length / 2, size - length / 2);
      const double shade = rng.uniform() < 0.5 ? 0.02 : 0.98;
      const double dy = std::sin(angle);
      const double dx = std::cos(angle);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double along = (x - cx) * dx + (y - cy) * dy;
          const double across = -(x - cx) * dy + (y - cy) * dx;
          if (std::abs(along) <= length / 2 && std::abs(across) <= half_width) {
            image(y, x) = shade;
            mask(y, x) = 1.0;
          }
        }
      break;
    }
    case DefectKind::kTextureSwap: {
      const int side = 10 + static_cast<int>(rng.index(7));
      const int y0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(size - side + 1)));
      const int x0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(size - side + 1)));
      const int other = n_classes > 1 ? (class_id + 1 + static_cast<int>(rng.index(n_classes - 1))) % n_classes
                                      : class_id + 1;
      const Mat<double> donor = render_texture(other, size, rng).transpose();
      image.block(y0, x0, side, side) = donor.block(y0, x0, side, side);
      mask.block(y0, x0, side, side).setOnes();
      break;
    }
  }
  clamp01(image);
  return mask;
}

std::vector<SynthSample> synth_dataset(std::uint64_t seed, const SynthConfig& cfg) {
  if (cfg.n_classes < 1) throw std::invalid_argument("synth_dataset: n_classes must be at least 1");
  if (cfg.n_per_class < 0) throw std::invalid_argument("synth_dataset: n_per_class must be nonnegative");
  if (cfg.anomaly_fraction < 0.0 || cfg.anomaly_fraction > 1.0) {
    throw std::invalid_argument("synth_dataset: anomaly_fraction must lie in [0,1]");
  }
  Rng rng(seed);
  std::vector<SynthSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_classes) * cfg.n_per_class);
  const int n_anomalous = static_cast<int>(std::lround(cfg.anomaly_fraction * cfg.n_per_class));
  for (int k = 0; k < cfg.n_classes; ++k)
    for (int i = 0; i < cfg.n_per_class; ++i) {
      SynthSample s;
      s.class_id = k;
      s.anomalous = i < n_anomalous;
      s.image = render_texture(k, cfg.image_size, rng);
      for (Eigen::Index p = 0; p < s.image.size(); ++p) s.image(p) += cfg.noise * rng.normal();
      clamp01(s.image);
      s.pixel_mask = s.anomalous ? inject_defect(s.image, k, cfg.n_classes, rng)
                                 : Mat<double>::Zero(cfg.image_size, cfg.image_size);
      out.push_back(std::move(s));
    }
  return out;
}

Mat<double> patch_mask(const Mat<double>& pixel_mask, int patch) {
  const auto gh = static_cast<int>(pixel_mask.rows()) / patch;
  const auto gw = static_cast<int>(pixel_mask.cols()) / patch;
  Mat<double> m = Mat<double>::Zero(gh, gw);
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x)
      if (pixel_mask.block(y * patch, x * patch, patch, patch).maxCoeff() > 0.0) m(y, x) = 1.0;
  return m;
}

std::vector<Example> prepare(const std::vector<SynthSample>& samples, int channels, int patch) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const SynthSample& s : samples) {
    out.push_back({stub_encoder(s.image, channels, patch), patch_mask(s.pixel_mask, patch), s.pixel_mask,
                   s.anomalous});
  }
  return out;
}

}  // namespace harmoniad::training
