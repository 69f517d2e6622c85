#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hdx {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

// Labelled feature matrix. Immutable once constructed; the constructor
// enforces the shape and label invariants.
class Dataset {
 public:
  // feature_std defaults to the per-column population standard deviation of
  // `features`.
  Dataset(Matrix features, std::vector<int> labels, int num_classes,
          std::optional<ImageShape> image_shape = std::nullopt,
          std::optional<Vector> feature_std = std::nullopt);

  std::size_t size() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  int num_classes() const { return num_classes_; }

  const Matrix& features() const { return features_; }
  Vector row(std::size_t i) const { return features_.row(static_cast<Eigen::Index>(i)).transpose(); }
  const std::vector<int>& labels() const { return labels_; }
  int label(std::size_t i) const { return labels_.at(i); }
  const std::optional<ImageShape>& image_shape() const { return image_shape_; }
  // Raw-scale per-column standard deviation, carried through standardize().
  const Vector& feature_std() const { return feature_std_; }

  // Number of distinct labels that actually occur.
  int classes_present() const;

  Dataset with_labels(std::vector<int> labels) const;
  Dataset subset(const std::vector<std::size_t>& indices) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  int num_classes_;
  std::optional<ImageShape> image_shape_;
  Vector feature_std_;
};

Vector column_std(const Matrix& features);

// Two interleaved half circles: class 0 is the upper arc (cos t, sin t),
// class 1 the lower arc (1 - cos t, 0.5 - sin t), t evenly spaced in [0, pi].
// Class 0 receives ceil(n/2) points.
Dataset gen_two_moons(std::size_t n, double noise_std, std::uint64_t seed);

// Three classes occupying the vertical thirds of the unit square.
Dataset gen_rectangles(std::size_t n, std::uint64_t seed);

// CSV with a header row. Labels are remapped densely to [0, l) in numeric order.
Dataset load_csv(const std::string& path, const std::string& label_column = "label");

// Writes features with 17 significant digits, label column last.
void save_csv(const Dataset& dataset, const std::string& path,
              const std::string& label_column = "label");

// u8 rank-3 image tensor plus u8 rank-1 label vector, big-endian IDX headers.
// Pixels are scaled by 1/255; num_classes = max label + 1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Zero-mean, unit-variance columns (population std). Constant columns are
// centred only. feature_std of the input is preserved.
Dataset standardize(const Dataset& dataset);

Vector one_hot(int label, int num_classes);

}  // namespace hdx
