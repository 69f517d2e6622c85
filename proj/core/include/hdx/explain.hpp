#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "hdx/data.hpp"
#include "hdx/nnet.hpp"
#include "hdx/stein.hpp"

namespace hdx {

struct ExplainerConfig {
  Variant variant = Variant::kRaw;
  BaseKernel kernel = BaseKernel::linear();
  std::size_t top_k = 3;
};

struct RankedEntry {
  std::size_t train_index = 0;
  double value = 0.0;
  int train_label = 0;

  bool operator==(const RankedEntry&) const = default;
};

struct Explanation {
  Vector test_features;
  int predicted_label = 0;
  Vector predicted_proba;
  // Descending by value, ties by ascending train_index.
  std::vector<RankedEntry> ranked;
  std::chrono::nanoseconds elapsed{0};
  std::uint64_t kernel_evaluations = 0;

  double elapsed_ms() const { return std::chrono::duration<double, std::milli>(elapsed).count(); }
  // {predicted_label, predicted_proba, topk: [{train_index, kernel_value, train_label}], elapsed_ms}
  std::string to_json() const;
  std::string to_table() const;
};

// Orders `entries` descending by value with ascending index as tie-break
// and keeps the first k. NaN values sort last.
std::vector<RankedEntry> top_k_entries(std::vector<RankedEntry> entries, std::size_t k);

// Lowest class index among maximal probabilities.
int argmax_lowest(const Vector& v);

// One Stein point per training example, built with its ground-truth label.
ScoreCache build_cache(const MLPClassifier& model, const Dataset& dataset, Variant variant);

// Ranks every cached training point by the Stein kernel against the test
// point labelled with the model's prediction.
Explanation explain(const MLPClassifier& model, const ScoreCache& cache, const Vector& x_test,
                    const ExplainerConfig& config);

// Diagonal kappa(z_i, z_i) for every cached point, descending.
std::vector<RankedEntry> self_influence_ranking(const ScoreCache& cache, const BaseKernel& kernel);

// Last-checkpoint TracIn on the final-layer weights:
// ((p_i - e_{y_i}) . (p_t - e_{yhat_t})) * (h_i . h_t), full ranking.
std::vector<RankedEntry> baseline_tracin_last(const MLPClassifier& model, const Dataset& dataset,
                                              const Vector& x_test);

// Cosine similarity of penultimate representations, full ranking.
std::vector<RankedEntry> baseline_rep_similarity(const MLPClassifier& model,
                                                 const Dataset& dataset, const Vector& x_test);

// Uniform query surface used by the evaluation harness.
class Explainer {
 public:
  virtual ~Explainer() = default;
  virtual std::string_view name() const = 0;
  virtual std::size_t train_size() const = 0;
  virtual Explanation explain(const Vector& x_test, std::size_t top_k) const = 0;
};

// Holds a reference to the model; the model must outlive the explainer.
class HdExplainer final : public Explainer {
 public:
  HdExplainer(const MLPClassifier& model, ScoreCache cache, BaseKernel kernel);

  std::string_view name() const override;
  std::size_t train_size() const override { return cache_.size(); }
  Explanation explain(const Vector& x_test, std::size_t top_k) const override;

  const ScoreCache& cache() const { return cache_; }
  const BaseKernel& kernel() const { return kernel_; }

 private:
  const MLPClassifier& model_;
  ScoreCache cache_;
  BaseKernel kernel_;
};

class TracInLastExplainer final : public Explainer {
 public:
  TracInLastExplainer(const MLPClassifier& model, const Dataset& dataset);

  std::string_view name() const override { return "tracin-last"; }
  std::size_t train_size() const override { return labels_.size(); }
  Explanation explain(const Vector& x_test, std::size_t top_k) const override;

  std::vector<double> scores(const Vector& x_test) const;

 private:
  const MLPClassifier& model_;
  Eigen::MatrixXd reps_;       // n x r
  Eigen::MatrixXd residuals_;  // n x l, p_i - e_{y_i}
  std::vector<int> labels_;
};

class RepSimilarityExplainer final : public Explainer {
 public:
  RepSimilarityExplainer(const MLPClassifier& model, const Dataset& dataset);

  std::string_view name() const override { return "rep-sim"; }
  std::size_t train_size() const override { return labels_.size(); }
  Explanation explain(const Vector& x_test, std::size_t top_k) const override;

  std::vector<double> scores(const Vector& x_test) const;

 private:
  const MLPClassifier& model_;
  Eigen::MatrixXd reps_;  // n x r
  Vector norms_;
  std::vector<int> labels_;
};

}  // namespace hdx
