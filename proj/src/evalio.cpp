#include "harmoniad/evalio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

namespace harmoniad::evalio {

namespace {

void check_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  for (int l : labels)
    if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0 or 1");
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_labels(scores, labels);
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double negatives = static_cast<double>(labels.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) throw std::invalid_argument("roc_auc needs both classes present");

  const std::vector<std::size_t> idx = order_by_score(scores, false);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    // Ranks i+1 .. j share their mean.
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) rank_sum += mid;
    i = j;
  }
  const double u = rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_labels(scores, labels);
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0.0) throw std::invalid_argument("pr_auc needs at least one positive");

  const std::vector<std::size_t> idx = order_by_score(scores, true);
  double tp = 0.0;
  double fp = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double group_tp = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]] == 1) {
        group_tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++j;
    }
    tp += group_tp;
    if (group_tp > 0.0) ap += (group_tp / positives) * (tp / (tp + fp));
    i = j;
  }
  return ap;
}

Metrics evaluate(std::span<const Prediction> predictions) {
  std::vector<double> image_scores;
  std::vector<int> image_labels;
  std::vector<double> pixel_scores;
  std::vector<int> pixel_labels;
  for (const Prediction& p : predictions) {
    if (p.pixel_scores.rows() != p.pixel_mask.rows() || p.pixel_scores.cols() != p.pixel_mask.cols()) {
      throw std::invalid_argument("evaluate: score map and mask differ in shape");
    }
    image_scores.push_back(p.image_score);
    image_labels.push_back(p.anomalous ? 1 : 0);
    for (Eigen::Index y = 0; y < p.pixel_scores.rows(); ++y)
      for (Eigen::Index x = 0; x < p.pixel_scores.cols(); ++x) {
        pixel_scores.push_back(p.pixel_scores(y, x));
        pixel_labels.push_back(p.pixel_mask(y, x) != 0.0 ? 1 : 0);
      }
  }
  Metrics m;
  m.i_roc = roc_auc(image_scores, image_labels);
  m.i_pr = pr_auc(image_scores, image_labels);
  m.p_roc = roc_auc(pixel_scores, pixel_labels);
  m.p_pr = pr_auc(pixel_scores, pixel_labels);
  return m;
}

// ---------------------------------------------------------------------------

std::size_t element_size(DType d) {
  switch (d) {
    case DType::kF32:
      return 4;
    case DType::kF64:
      return 8;
    case DType::kU8:
      return 1;
  }
  throw std::invalid_argument("unknown dtype");
}

std::size_t TensorRecord::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : shape) n *= d;
  return n;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ContainerError(ContainerError::Kind::kTruncated, std::string("HAD1 truncated while reading ") + what);
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint64_t uint(int bytes, const char* what) { return get_le(take(static_cast<std::size_t>(bytes), what), bytes); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void check_record(const TensorRecord& r) {
  if (r.name.size() > 0xFFFF) throw std::invalid_argument("record name too long: " + r.name.substr(0, 32));
  if (r.shape.size() > 0xFF) throw std::invalid_argument("record rank too large: " + r.name);
  if (r.payload.size() != r.element_count() * element_size(r.dtype)) {
    throw std::invalid_argument("record payload size disagrees with shape: " + r.name);
  }
}

}  // namespace

TensorRecord TensorRecord::from_f64(std::string name, std::vector<std::uint32_t> shape, std::span<const double> data) {
  TensorRecord r{std::move(name), DType::kF64, std::move(shape), {}};
  if (data.size() != r.element_count()) throw std::invalid_argument("from_f64: data size disagrees with shape");
  r.payload.reserve(data.size() * 8);
  for (double v : data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(r.payload, bits);
  }
  return r;
}

TensorRecord TensorRecord::from_f32(std::string name, std::vector<std::uint32_t> shape, std::span<const float> data) {
  TensorRecord r{std::move(name), DType::kF32, std::move(shape), {}};
  if (data.size() != r.element_count()) throw std::invalid_argument("from_f32: data size disagrees with shape");
  r.payload.reserve(data.size() * 4);
  for (float v : data) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u32(r.payload, bits);
  }
  return r;
}

TensorRecord TensorRecord::from_u8(std::string name, std::vector<std::uint32_t> shape,
                                   std::span<const std::uint8_t> data) {
  TensorRecord r{std::move(name), DType::kU8, std::move(shape), {}};
  if (data.size() != r.element_count()) throw std::invalid_argument("from_u8: data size disagrees with shape");
  r.payload.assign(data.begin(), data.end());
  return r;
}

std::vector<double> TensorRecord::to_f64() const {
  const std::size_t n = element_count();
  std::vector<double> out(n);
  const std::uint8_t* p = payload.data();
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::kF64: {
        const std::uint64_t bits = get_le(p + 8 * i, 8);
        std::memcpy(&out[i], &bits, sizeof bits);
        break;
      }
      case DType::kF32: {
        const auto bits = static_cast<std::uint32_t>(get_le(p + 4 * i, 4));
        float f;
        std::memcpy(&f, &bits, sizeof f);
        out[i] = f;
        break;
      }
      case DType::kU8:
        out[i] = p[i];
        break;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_container(std::span<const TensorRecord> records) {
  std::set<std::string> names;
  std::vector<std::uint8_t> out = {'H', 'A', 'D', '1'};
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const TensorRecord& r : records) {
    check_record(r);
    if (!names.insert(r.name).second) {
      throw ContainerError(ContainerError::Kind::kDuplicateName, "duplicate record name: " + r.name);
    }
    put_u16(out, static_cast<std::uint16_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.dtype));
    out.push_back(static_cast<std::uint8_t>(r.shape.size()));
    for (std::uint32_t d : r.shape) put_u32(out, d);
    out.insert(out.end(), r.payload.begin(), r.payload.end());
  }
  return out;
}

std::vector<TensorRecord> decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "HAD1", 4) != 0) {
    throw ContainerError(ContainerError::Kind::kBadMagic, "not a HAD1 container (bad magic)");
  }
  Reader in(bytes.subspan(4));
  const auto count = static_cast<std::uint32_t>(in.uint(4, "record count"));
  std::set<std::string> names;
  std::vector<TensorRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    const auto name_len = static_cast<std::size_t>(in.uint(2, "name length"));
    const std::uint8_t* name = in.take(name_len, "name");
    r.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto tag = static_cast<std::uint8_t>(in.uint(1, "dtype"));
    if (tag > 2) throw ContainerError(ContainerError::Kind::kMalformed, "unknown dtype tag in record " + r.name);
    r.dtype = static_cast<DType>(tag);
    const auto ndim = static_cast<std::size_t>(in.uint(1, "rank"));
    for (std::size_t d = 0; d < ndim; ++d) r.shape.push_back(static_cast<std::uint32_t>(in.uint(4, "dims")));
    const std::size_t n = r.element_count() * element_size(r.dtype);
    const std::uint8_t* payload = in.take(n, "payload");
    r.payload.assign(payload, payload + n);
    if (!names.insert(r.name).second) {
      throw ContainerError(ContainerError::Kind::kDuplicateName, "duplicate record name: " + r.name);
    }
    records.push_back(std::move(r));
  }
  if (!in.done()) throw ContainerError(ContainerError::Kind::kMalformed, "trailing bytes after last record");
  return records;
}

void write_container(const std::filesystem::path& path, std::span<const TensorRecord> records) {
  const std::vector<std::uint8_t> bytes = encode_container(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContainerError(ContainerError::Kind::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ContainerError(ContainerError::Kind::kIo, "write failed: " + path.string());
}

std::vector<TensorRecord> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError(ContainerError::Kind::kIo, "cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

const TensorRecord& find_record(std::span<const TensorRecord> records, const std::string& name) {
  for (const TensorRecord& r : records)
    if (r.name == name) return r;
  throw ContainerError(ContainerError::Kind::kMalformed, "missing record: " + name);
}

TensorRecord matrix_record(std::string name, const Mat<double>& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row = m;
  return TensorRecord::from_f64(std::move(name),
                                {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                                std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
}

Mat<double> record_matrix(const TensorRecord& r) {
  if (r.shape.size() != 2) throw ContainerError(ContainerError::Kind::kMalformed, r.name + ": expected a 2-D record");
  const std::vector<double> v = r.to_f64();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMat>(v.data(), r.shape[0], r.shape[1]);
}

TensorRecord feature_record(std::string name, const FeatureMap<double>& f) {
  // channels x tokens row-major is exactly C x H x W row-major.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row = f.values;
  return TensorRecord::from_f64(std::move(name),
                                {static_cast<std::uint32_t>(f.channels()), static_cast<std::uint32_t>(f.height),
                                 static_cast<std::uint32_t>(f.width)},
                                std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
}

FeatureMap<double> record_feature(const TensorRecord& r) {
  if (r.shape.size() != 3) throw ContainerError(ContainerError::Kind::kMalformed, r.name + ": expected a C x H x W record");
  const std::vector<double> v = r.to_f64();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto c = static_cast<int>(r.shape[0]);
  const auto h = static_cast<int>(r.shape[1]);
  const auto w = static_cast<int>(r.shape[2]);
  return FeatureMap<double>(h, w, Mat<double>(Eigen::Map<const RowMat>(v.data(), c, static_cast<Eigen::Index>(h) * w)));
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> heatmap_pixels(const Mat<double>& map) {
  if (!map.allFinite()) throw NumericError("heatmap contains non-finite values");
  std::vector<std::uint8_t> px(static_cast<std::size_t>(map.size()), 0);
  if (map.size() == 0) return px;
  const double lo = map.minCoeff();
  const double hi = map.maxCoeff();
  if (hi == lo) return px;
  std::size_t i = 0;
  for (Eigen::Index y = 0; y < map.rows(); ++y)
    for (Eigen::Index x = 0; x < map.cols(); ++x)
      px[i++] = static_cast<std::uint8_t>(std::lround(255.0 * (map(y, x) - lo) / (hi - lo)));
  return px;
}

void export_heatmap(const Mat<double>& map, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> px = heatmap_pixels(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << map.cols() << ' ' << map.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace harmoniad::evalio
