#include "hdx/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "hdx/error.hpp"
#include "hdx/io.hpp"

namespace hdx {

Vector column_std(const Matrix& features) {
  const Eigen::Index n = features.rows();
  Vector out = Vector::Zero(features.cols());
  if (n == 0) return out;
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double mean = features.col(j).mean();
    out(j) = std::sqrt((features.col(j).array() - mean).square().sum() / static_cast<double>(n));
  }
  return out;
}

Dataset::Dataset(Matrix features, std::vector<int> labels, int num_classes,
                 std::optional<ImageShape> image_shape, std::optional<Vector> feature_std)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      image_shape_(image_shape) {
  if (features_.rows() < 1 || features_.cols() < 1)
    throw ArgumentError("dataset needs n >= 1 rows and d >= 1 columns");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size())
    throw ArgumentError("feature rows (" + std::to_string(features_.rows()) +
                        ") and labels (" + std::to_string(labels_.size()) + ") differ");
  if (num_classes_ < 2) throw ArgumentError("num_classes must be >= 2");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_classes_)
      throw ArgumentError("label " + std::to_string(labels_[i]) + " at row " + std::to_string(i) +
                          " outside [0, " + std::to_string(num_classes_) + ")");
  }
  if (image_shape_ && image_shape_->size() != dim())
    throw ArgumentError("image shape does not match feature dimension");
  if (!features_.allFinite()) throw ArgumentError("dataset features must be finite");
  if (feature_std) {
    if (feature_std->size() != features_.cols())
      throw ArgumentError("feature_std length does not match feature dimension");
    if ((feature_std->array() < 0.0).any()) throw ArgumentError("feature_std must be >= 0");
    feature_std_ = std::move(*feature_std);
  } else {
    feature_std_ = column_std(features_);
  }
}

int Dataset::classes_present() const {
  std::set<int> seen(labels_.begin(), labels_.end());
  return static_cast<int>(seen.size());
}

Dataset Dataset::with_labels(std::vector<int> labels) const {
  return Dataset(features_, std::move(labels), num_classes_, image_shape_, feature_std_);
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Matrix f(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<int> l(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw ArgumentError("subset index out of range");
    f.row(static_cast<Eigen::Index>(k)) = features_.row(static_cast<Eigen::Index>(indices[k]));
    l[k] = labels_[indices[k]];
  }
  return Dataset(std::move(f), std::move(l), num_classes_, image_shape_, feature_std_);
}

Dataset gen_two_moons(std::size_t n, double noise_std, std::uint64_t seed) {
  if (n < 2) throw ArgumentError("two moons needs n >= 2");
  if (!(noise_std >= 0.0)) throw ArgumentError("noise_std must be >= 0");

  const std::size_t n_upper = (n + 1) / 2;
  const std::size_t n_lower = n - n_upper;
  auto angle = [](std::size_t i, std::size_t count) {
    return count > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1)
                     : 0.0;
  };

  Matrix x(static_cast<Eigen::Index>(n), 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n_upper; ++i) {
    const double t = angle(i, n_upper);
    x(static_cast<Eigen::Index>(i), 0) = std::cos(t);
    x(static_cast<Eigen::Index>(i), 1) = std::sin(t);
    y[i] = 0;
  }
  for (std::size_t i = 0; i < n_lower; ++i) {
    const double t = angle(i, n_lower);
    const auto r = static_cast<Eigen::Index>(n_upper + i);
    x(r, 0) = 1.0 - std::cos(t);
    x(r, 1) = 0.5 - std::sin(t);
    y[n_upper + i] = 1;
  }
  if (noise_std > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < 2; ++j) x(i, j) += noise(rng);
  }
  return Dataset(std::move(x), std::move(y), 2);
}

Dataset gen_rectangles(std::size_t n, std::uint64_t seed) {
  if (n < 3) throw ArgumentError("rectangles needs n >= 3");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix x(static_cast<Eigen::Index>(n), 2);
  std::vector<int> y(n);
  std::size_t row = 0;
  for (int c = 0; c < 3; ++c) {
    const std::size_t count = n / 3 + (static_cast<std::size_t>(c) < n % 3 ? 1 : 0);
    const double left = static_cast<double>(c) / 3.0;
    const double right = static_cast<double>(c + 1) / 3.0;
    for (std::size_t k = 0; k < count; ++k, ++row) {
      x(static_cast<Eigen::Index>(row), 0) = left + (right - left) * unit(rng);
      x(static_cast<Eigen::Index>(row), 1) = unit(rng);
      y[row] = c;
    }
  }
  return Dataset(std::move(x), std::move(y), 3);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = cell.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? std::string() : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw DataError(DataError::Kind::kEmpty, path + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const std::vector<std::string> header = split_csv_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end())
    throw DataError(DataError::Kind::kMissingColumn,
                    path + ": no column named '" + label_column + "'");
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());
  if (header.size() < 2)
    throw DataError(DataError::Kind::kParse, path + ": need at least one feature column");

  std::vector<std::vector<double>> rows;
  std::vector<long long> raw_labels;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(DataError::Kind::kParse, path + ": row " + std::to_string(row_no) + " has " +
                                                   std::to_string(cells.size()) + " cells, expected " +
                                                   std::to_string(header.size()));
    std::vector<double> feats;
    feats.reserve(header.size() - 1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v))
        throw DataError(DataError::Kind::kParse, path + ": non-numeric value '" + cells[c] +
                                                     "' at row " + std::to_string(row_no) +
                                                     ", column '" + header[c] + "'");
      if (c == label_col) {
        if (v != std::floor(v))
          throw DataError(DataError::Kind::kParse, path + ": non-integer label at row " +
                                                       std::to_string(row_no) + ", column '" +
                                                       header[c] + "'");
        raw_labels.push_back(static_cast<long long>(v));
      } else {
        feats.push_back(v);
      }
    }
    rows.push_back(std::move(feats));
  }
  if (rows.empty()) throw DataError(DataError::Kind::kEmpty, path + ": no data rows");

  std::map<long long, int> remap;
  for (long long l : raw_labels) remap.emplace(l, 0);
  if (remap.size() < 2)
    throw DataError(DataError::Kind::kSingleClass, path + ": only one class present");
  int next = 0;
  for (auto& [raw, dense] : remap) dense = next++;

  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size() - 1));
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    y[i] = remap.at(raw_labels[i]);
  }
  return Dataset(std::move(x), std::move(y), static_cast<int>(remap.size()));
}

void save_csv(const Dataset& dataset, const std::string& path, const std::string& label_column) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t j = 0; j < dataset.dim(); ++j) out << 'x' << j << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset.dim(); ++j)
      out << dataset.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << ',';
    out << dataset.label(i) << '\n';
  }
  write_file_atomic(path, out.str());
}

namespace {

struct IdxHeader {
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset = 0;
};

IdxHeader parse_idx_header(const std::vector<char>& bytes, std::uint8_t expected_rank,
                           const std::string& path) {
  if (bytes.size() < 4) throw FormatError(path + ": truncated IDX header");
  const auto b = [&](std::size_t i) { return static_cast<std::uint8_t>(bytes[i]); };
  if (b(0) != 0 || b(1) != 0 || b(2) != 0x08)
    throw FormatError(path + ": wrong IDX magic (expected unsigned byte tensor)");
  if (b(3) != expected_rank)
    throw FormatError(path + ": IDX rank " + std::to_string(b(3)) + ", expected " +
                      std::to_string(expected_rank));
  IdxHeader h;
  h.payload_offset = 4 + 4 * static_cast<std::size_t>(expected_rank);
  if (bytes.size() < h.payload_offset) throw FormatError(path + ": truncated IDX header");
  for (std::size_t r = 0; r < expected_rank; ++r) {
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < 4; ++k) v = (v << 8) | b(4 + 4 * r + k);
    h.dims.push_back(v);
  }
  std::size_t payload = 1;
  for (auto d : h.dims) payload *= d;
  if (bytes.size() - h.payload_offset < payload)
    throw FormatError(path + ": truncated IDX payload");
  return h;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::vector<char> img = read_file(images_path);
  const std::vector<char> lab = read_file(labels_path);
  const IdxHeader ih = parse_idx_header(img, 3, images_path);
  const IdxHeader lh = parse_idx_header(lab, 1, labels_path);

  const std::size_t n = ih.dims[0];
  const std::size_t h = ih.dims[1];
  const std::size_t w = ih.dims[2];
  if (lh.dims[0] != n)
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images, " +
                      std::to_string(lh.dims[0]) + " labels");
  if (n == 0 || h * w == 0) throw FormatError(images_path + ": empty IDX tensor");

  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(h * w));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h * w; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<std::uint8_t>(img[ih.payload_offset + i * h * w + j]) / 255.0;

  std::vector<int> y(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<std::uint8_t>(lab[lh.payload_offset + i]);
    max_label = std::max(max_label, y[i]);
  }
  return Dataset(std::move(x), std::move(y), std::max(2, max_label + 1), ImageShape{h, w, 1});
}

Dataset standardize(const Dataset& dataset) {
  if (dataset.size() < 2) throw ArgumentError("standardize needs n >= 2");
  Matrix x = dataset.features();
  const Vector sd = column_std(x);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    x.col(j).array() -= mean;
    if (sd(j) > 0.0) x.col(j) /= sd(j);
  }
  return Dataset(std::move(x), dataset.labels(), dataset.num_classes(), dataset.image_shape(),
                 dataset.feature_std());
}

Vector one_hot(int label, int num_classes) {
  if (num_classes < 1 || label < 0 || label >= num_classes)
    throw ArgumentError("label " + std::to_string(label) + " outside [0, " +
                        std::to_string(num_classes) + ")");
  Vector v = Vector::Zero(num_classes);
  v(label) = 1.0;
  return v;
}

}  // namespace hdx
