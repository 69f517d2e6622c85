#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hdx/data.hpp"
#include "hdx/explain.hpp"
#include "hdx/nnet.hpp"
#include "hdx/stein.hpp"

namespace hdx {

enum class Augmentation { kIdentity, kNoise, kHorizontalFlip };

std::string_view to_string(Augmentation a);
Augmentation parse_augmentation(std::string_view s);

// SplitMix64 finaliser; derives independent stream seeds from (seed, salt).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

// x_i + eps, eps_j ~ N(0, (0.01 * sigma_j)^2) with sigma the raw-scale
// feature_std of the dataset.
Vector augment_noise(const Dataset& dataset, std::size_t index, std::uint64_t seed);

// Reverses the width axis of an (H, W, C) row-major image.
Vector flip_horizontal(const Vector& image, const ImageShape& shape);
Vector augment_hflip(const Dataset& dataset, std::size_t index);

// |union of sets| / (number of sets * k). All sets must have size k.
double coverage(const std::vector<std::vector<std::size_t>>& explanation_sets);

struct HitRateConfig {
  Augmentation augmentation = Augmentation::kNoise;
  std::size_t trials_per_point = 30;
  std::size_t sample_size = 100;
  std::vector<std::size_t> ks = {1, 3, 5};
  std::uint64_t seed = 0;
};

struct KMetrics {
  std::size_t k = 0;
  double hit_rate = 0.0;
  double coverage = 0.0;
};

struct MetricsReport {
  std::string method;
  std::vector<KMetrics> per_k;
  double mean_ms = 0.0;
  // Half-width of the normal-approximation 95% interval of the mean.
  double ci95_ms = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  const KMetrics& at(std::size_t k) const;

  static std::string csv_header();
  // One "method,k,hit_rate,coverage,mean_ms,ci95_ms,trials,seed" row per k.
  std::string csv_rows() const;
  std::string to_json() const;
};

// Samples `sample_size` training indices without replacement, builds
// `trials_per_point` augmented queries from each, and counts a hit at k when
// the source index is among the top k. Timing covers explain() only.
MetricsReport hit_rate_experiment(const Explainer& explainer, const Dataset& dataset,
                                  const HitRateConfig& config);

// Indices sampled uniformly without replacement, ascending.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed);

struct FlippedLabels {
  std::vector<int> labels;
  std::vector<std::size_t> flipped;  // ascending
};

// Moves `count` distinct labels to a uniformly chosen different class.
FlippedLabels flip_labels(const std::vector<int>& labels, int num_classes, std::size_t count,
                          std::uint64_t seed);

struct PrecisionRecall {
  std::size_t m = 0;
  double precision = 0.0;
  double recall = 0.0;
};

PrecisionRecall precision_recall_at(const std::vector<RankedEntry>& ranking,
                                    const std::vector<std::size_t>& flipped, std::size_t m);

struct DebugReport {
  std::string method;
  std::size_t flip_count = 0;
  std::vector<std::size_t> flipped;
  std::vector<PrecisionRecall> curve;
  double train_accuracy = 0.0;

  static std::string csv_header();
  std::string csv_rows(std::uint64_t seed) const;
};

// Flips ceil(flip_fraction * n) labels, retrains on the corrupted data and
// ranks training points by Stein self-influence, once per variant. The
// curve is evaluated at m = ceil(f n)/2, ceil(f n), 2 ceil(f n).
std::vector<DebugReport> label_flip_debug_experiment(
    const Dataset& dataset, double flip_fraction, const TrainConfig& train_config,
    const KernelSpec& kernel, std::uint64_t seed,
    const std::vector<Variant>& variants = {Variant::kLastLayer});

struct ShiftResult {
  Vector shift;
  double norm = 0.0;
  KsdEstimate ksd;
};

// Unit vector along the feature with the smallest raw standard deviation
// (lowest index on ties): the axis along which the data is tightest.
Vector default_shift_direction(const Dataset& dataset);

// s * direction / |direction| for each magnitude s.
std::vector<Vector> shifts_along(const std::vector<double>& magnitudes, const Vector& direction);

// V-statistic KSD of {(x_i + delta, y_i)} against the model for each shift.
// A zero shift is prepended unless the list already starts with one.
std::vector<ShiftResult> ksd_shift_experiment(const MLPClassifier& model, const Dataset& dataset,
                                              std::vector<Vector> shifts,
                                              const BaseKernel& kernel,
                                              Variant variant = Variant::kRaw);

}  // namespace hdx
