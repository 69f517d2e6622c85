#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hdx/data.hpp"
#include "hdx/nnet.hpp"

namespace hdx {

// Which space the Stein points live in: raw inputs, or the penultimate-layer
// representation with the final linear layer as the model.
enum class Variant : std::uint8_t { kRaw = 0, kLastLayer = 1 };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

// Base kernel k(a, b) with closed-form first derivatives and the trace of the
// mixed Hessian sum_i d^2 k / (da_i db_i).
class BaseKernel {
 public:
  enum class Type { kLinear, kRbf, kImq };

  static BaseKernel linear();
  // exp(-gamma |a - b|^2)
  static BaseKernel rbf(double gamma);
  // (c^2 + |a - b|^2)^beta
  static BaseKernel imq(double c = 1.0, double beta = -0.5);

  Type type() const { return type_; }
  double gamma() const { return gamma_; }
  double c() const { return c_; }
  double beta() const { return beta_; }
  std::string describe() const;

  double eval(const Vector& a, const Vector& b) const;
  Vector grad_a(const Vector& a, const Vector& b) const;
  Vector grad_b(const Vector& a, const Vector& b) const;
  double trace_hessian(const Vector& a, const Vector& b) const;

 private:
  BaseKernel(Type type, double gamma, double c, double beta)
      : type_(type), gamma_(gamma), c_(c), beta_(beta) {}

  Type type_;
  double gamma_;
  double c_;
  double beta_;
};

std::string_view to_string(BaseKernel::Type t);
BaseKernel::Type parse_kernel_type(std::string_view s);

// Kernel choice before data-dependent parameters are fixed. An RBF spec
// without gamma resolves through the median heuristic.
struct KernelSpec {
  BaseKernel::Type type = BaseKernel::Type::kRbf;
  std::optional<double> gamma;
  double c = 1.0;
  double beta = -0.5;
};

// z = [features || onehot(label)] together with its score
// s(z) = [grad_features log p(label | .) || log p(. | features)].
struct SteinPoint {
  Vector z;
  Vector score;

  std::size_t dim() const { return static_cast<std::size_t>(z.size()); }
};

SteinPoint make_stein_point(const MLPClassifier& model, const Vector& x, int y, Variant variant);

// Stein point dimension D for a model and variant.
std::size_t stein_dim(const MLPClassifier& model, Variant variant);

// The four additive parts of the Stein kernel:
//   trace(grad_a grad_b k) + k s_a.s_b + grad_a k . s_b + grad_b k . s_a
struct SteinTerms {
  double trace_hessian = 0.0;
  double kernel_score = 0.0;
  double grad_a_score = 0.0;
  double grad_b_score = 0.0;

  double total() const { return trace_hessian + kernel_score + grad_a_score + grad_b_score; }
};

SteinTerms stein_kernel_terms(const BaseKernel& k, const SteinPoint& a, const SteinPoint& b);
double stein_kernel(const BaseKernel& k, const SteinPoint& a, const SteinPoint& b);

// Number of stein_kernel() calls made on the calling thread.
std::uint64_t stein_kernel_evaluations();

// Symmetric n x n matrix of stein_kernel values.
Eigen::MatrixXd stein_gram(std::span<const SteinPoint> points, const BaseKernel& k);

struct KsdEstimate {
  double value = 0.0;
  // Standard error of the mean of the off-diagonal kernel values, counting
  // each unordered pair once. Zero when n < 3.
  double std_error = 0.0;
};

// (1/n^2) sum_ij kappa(z_i, z_j)
KsdEstimate ksd_vstat(std::span<const SteinPoint> points, const BaseKernel& k);
// (1/(n(n-1))) sum_{i != j} kappa(z_i, z_j)
KsdEstimate ksd_ustat(std::span<const SteinPoint> points, const BaseKernel& k);

// gamma = 1 / (2 m^2) with m the median pairwise distance over at most
// `max_points` points (uniform subsample when larger, seeded). m == 0 gives 1.
double median_heuristic_gamma(std::span<const Vector> points, std::uint64_t seed = 0,
                              std::size_t max_points = 1000);

BaseKernel resolve_kernel(const KernelSpec& spec, std::span<const SteinPoint> points,
                          std::uint64_t seed = 0);

// Per-training-point Stein points for one model instance. Records carry
// their original training index so reordering never changes tie-breaks.
class ScoreCache {
 public:
  ScoreCache(std::uint64_t model_fingerprint, Variant variant, std::vector<SteinPoint> points,
             std::vector<int> labels, std::vector<std::size_t> train_indices = {});

  std::size_t size() const { return points_.size(); }
  std::size_t dim() const { return points_.front().dim(); }
  std::uint64_t fingerprint() const { return fingerprint_; }
  Variant variant() const { return variant_; }
  const std::vector<SteinPoint>& points() const { return points_; }
  const SteinPoint& point(std::size_t i) const { return points_.at(i); }
  int label(std::size_t i) const { return labels_.at(i); }
  std::size_t train_index(std::size_t i) const { return train_indices_.at(i); }

  // Record order given by `order` (a permutation of [0, size())).
  ScoreCache permuted(const std::vector<std::size_t>& order) const;

  // Throws StaleCacheError unless built from exactly this model, and
  // ArgumentError when D does not fit the model.
  void check_model(const MLPClassifier& model) const;

  // "HDXC" bytes, records in ascending training-index order.
  std::vector<char> serialize() const;
  static ScoreCache deserialize(const std::vector<char>& bytes);

 private:
  std::uint64_t fingerprint_;
  Variant variant_;
  std::vector<SteinPoint> points_;
  std::vector<int> labels_;
  std::vector<std::size_t> train_indices_;
};

void save_cache(const ScoreCache& cache, const std::string& path);
ScoreCache load_cache(const std::string& path);

}  // namespace hdx
