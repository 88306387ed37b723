#include "harmoniad/pipeline.hpp"

#include <algorithm>

namespace harmoniad::pipeline {

Mat<double> pixel_map(const Mat<double>& patch_scores, int out_h, int out_w) {
  const auto in_h = static_cast<int>(patch_scores.rows());
  const auto in_w = static_cast<int>(patch_scores.cols());
  if (in_h < 1 || in_w < 1) throw std::invalid_argument("pixel_map: empty score map");
  if (out_h < in_h || out_w < in_w) throw std::invalid_argument("pixel_map: downsampling is not supported");
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  Mat<double> out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * patch_scores(y0, x0) + wx * patch_scores(y0, x1);
      const double bottom = (1.0 - wx) * patch_scores(y1, x0) + wx * patch_scores(y1, x1);
      out(y, x) = (1.0 - wy) * top + wy * bottom;
    }
  }
  return out;
}

AnomalyMap anomaly_map(const Mat<double>& patch_scores, int image_h, int image_w) {
  AnomalyMap m;
  m.patch_scores = patch_scores;
  m.pixel_scores = pixel_map(patch_scores, image_h, image_w);
  m.image_score = patch_scores.maxCoeff();
  return m;
}

}  // namespace harmoniad::pipeline
