#pragma once

// Detection metrics, heatmap export and the HAD1 tensor container.
//
// HAD1 layout, all integers little-endian:
//   "HAD1" | u32 record count | records...
//   record: u16 name length | name bytes | u8 dtype | u8 ndim | u32 dims[ndim] | payload
// dtype tags: 0 = f32, 1 = f64, 2 = u8. Payloads are row-major,
// little-endian, element size x product(dims) bytes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "harmoniad/error.hpp"
#include "harmoniad/numerics.hpp"

namespace harmoniad::evalio {

// ---------------------------------------------------------------------------
// Metrics.

enum class Level { kImage, kPixel };

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 = normal, 1 = anomalous
  Level level = Level::kImage;
};

// Mann-Whitney statistic: probability that a random positive outscores a
// random negative, ties counted 1/2. Throws if either class is absent.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
inline double roc_auc(const ScoredSet& s) { return roc_auc(s.scores, s.labels); }

// Average precision with step interpolation; tied scores form one threshold.
double pr_auc(std::span<const double> scores, std::span<const int> labels);
inline double pr_auc(const ScoredSet& s) { return pr_auc(s.scores, s.labels); }

struct Metrics {
  double p_roc = 0.0;
  double i_roc = 0.0;
  double p_pr = 0.0;
  double i_pr = 0.0;
};

struct Prediction {
  Mat<double> pixel_scores;
  Mat<double> pixel_mask;
  double image_score = 0.0;
  bool anomalous = false;
};

// Image metrics from image scores; pixel metrics over all pixels pooled.
Metrics evaluate(std::span<const Prediction> predictions);

// ---------------------------------------------------------------------------
// Container.

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

std::size_t element_size(DType d);

struct TensorRecord {
  std::string name;
  DType dtype = DType::kF64;
  std::vector<std::uint32_t> shape;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const;

  static TensorRecord from_f64(std::string name, std::vector<std::uint32_t> shape, std::span<const double> data);
  static TensorRecord from_f32(std::string name, std::vector<std::uint32_t> shape, std::span<const float> data);
  static TensorRecord from_u8(std::string name, std::vector<std::uint32_t> shape, std::span<const std::uint8_t> data);

  // Elements widened to double, row-major.
  std::vector<double> to_f64() const;
};

class ContainerError : public IoError {
 public:
  enum class Kind { kBadMagic, kTruncated, kDuplicateName, kMalformed, kIo };
  ContainerError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> encode_container(std::span<const TensorRecord> records);
std::vector<TensorRecord> decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, std::span<const TensorRecord> records);
std::vector<TensorRecord> read_container(const std::filesystem::path& path);

const TensorRecord& find_record(std::span<const TensorRecord> records, const std::string& name);

// Row-major record of a matrix; shape [rows, cols].
TensorRecord matrix_record(std::string name, const Mat<double>& m);
Mat<double> record_matrix(const TensorRecord& r);

// Record of a C x H x W feature map; shape [C, H, W].
TensorRecord feature_record(std::string name, const FeatureMap<double>& f);
FeatureMap<double> record_feature(const TensorRecord& r);

// ---------------------------------------------------------------------------
// Heatmaps.

// Min-max normalized 8-bit intensities, row-major; constant maps give zeros.
std::vector<std::uint8_t> heatmap_pixels(const Mat<double>& map);

// Binary PGM (P5).
void export_heatmap(const Mat<double>& map, const std::filesystem::path& path);

}  // namespace harmoniad::evalio
