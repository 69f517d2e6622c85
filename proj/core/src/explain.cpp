#include "hdx/explain.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hdx/error.hpp"

namespace hdx {

namespace {

using Clock = std::chrono::steady_clock;

bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  const bool a_nan = std::isnan(a.value);
  const bool b_nan = std::isnan(b.value);
  if (a_nan != b_nan) return b_nan;
  if (!a_nan && a.value != b.value) return a.value > b.value;
  return a.train_index < b.train_index;
}

void check_top_k(std::size_t top_k, std::size_t n) {
  if (top_k < 1 || top_k > n)
    throw ArgumentError("top_k=" + std::to_string(top_k) + " must lie in [1, " +
                        std::to_string(n) + "]");
}

void check_test_point(const MLPClassifier& model, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim())
    throw ArgumentError("test point has dimension " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(model.input_dim()));
  if (!x.allFinite()) throw ArgumentError("test point contains non-finite values");
}

void check_dataset(const MLPClassifier& model, const Dataset& dataset) {
  if (dataset.dim() != model.input_dim())
    throw ArgumentError("dataset dimension " + std::to_string(dataset.dim()) +
                        " does not match model input " + std::to_string(model.input_dim()));
  if (dataset.num_classes() > model.num_classes())
    throw ArgumentError("dataset has more classes than the model outputs");
}

Explanation start_explanation(const MLPClassifier& model, const Vector& x_test) {
  check_test_point(model, x_test);
  Explanation e;
  e.test_features = x_test;
  e.predicted_proba = model.predict_proba(x_test);
  e.predicted_label = argmax_lowest(e.predicted_proba);
  return e;
}

Explanation rank_against_cache(const MLPClassifier& model, const ScoreCache& cache,
                               const BaseKernel& kernel, const Vector& x_test,
                               std::size_t top_k) {
  check_top_k(top_k, cache.size());
  const auto t0 = Clock::now();
  Explanation e = start_explanation(model, x_test);
  const SteinPoint test = make_stein_point(model, x_test, e.predicted_label, cache.variant());

  const std::uint64_t before = stein_kernel_evaluations();
  std::vector<RankedEntry> entries(cache.size());
  for (std::size_t i = 0; i < cache.size(); ++i)
    entries[i] = {cache.train_index(i), stein_kernel(kernel, cache.point(i), test),
                  cache.label(i)};
  e.kernel_evaluations = stein_kernel_evaluations() - before;
  e.ranked = top_k_entries(std::move(entries), top_k);
  e.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0);
  return e;
}

}  // namespace

int argmax_lowest(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

std::vector<RankedEntry> top_k_entries(std::vector<RankedEntry> entries, std::size_t k) {
  k = std::min(k, entries.size());
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k),
                    entries.end(), ranks_before);
  entries.resize(k);
  return entries;
}

std::string Explanation::to_json() const {
  nlohmann::json j;
  j["predicted_label"] = predicted_label;
  j["predicted_proba"] = std::vector<double>(predicted_proba.data(),
                                             predicted_proba.data() + predicted_proba.size());
  nlohmann::json topk = nlohmann::json::array();
  for (const auto& r : ranked)
    topk.push_back({{"train_index", r.train_index},
                    {"kernel_value", r.value},
                    {"train_label", r.train_label}});
  j["topk"] = std::move(topk);
  j["elapsed_ms"] = elapsed_ms();
  return j.dump(2);
}

std::string Explanation::to_table() const {
  std::ostringstream os;
  os << "predicted_label " << predicted_label << "\npredicted_proba";
  os << std::setprecision(17);
  for (Eigen::Index c = 0; c < predicted_proba.size(); ++c) os << ' ' << predicted_proba(c);
  os << "\nelapsed_ms " << elapsed_ms() << '\n';
  os << std::left << std::setw(6) << "rank" << std::setw(13) << "train_index" << std::setw(13)
     << "train_label" << "kernel_value\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    os << std::left << std::setw(6) << r + 1 << std::setw(13) << ranked[r].train_index
       << std::setw(13) << ranked[r].train_label << ranked[r].value << '\n';
  }
  return os.str();
}

ScoreCache build_cache(const MLPClassifier& model, const Dataset& dataset, Variant variant) {
  check_dataset(model, dataset);
  if (variant == Variant::kLastLayer && !model.has_hidden_layer())
    throw UnsupportedError("last-layer variant needs a model with a hidden layer");
  std::vector<SteinPoint> points;
  points.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    points.push_back(make_stein_point(model, dataset.row(i), dataset.label(i), variant));
  return ScoreCache(model.fingerprint(), variant, std::move(points), dataset.labels());
}

Explanation explain(const MLPClassifier& model, const ScoreCache& cache, const Vector& x_test,
                    const ExplainerConfig& config) {
  if (cache.variant() != config.variant)
    throw ArgumentError("cache variant " + std::string(to_string(cache.variant())) +
                        " does not match requested " + std::string(to_string(config.variant)));
  cache.check_model(model);
  return rank_against_cache(model, cache, config.kernel, x_test, config.top_k);
}

std::vector<RankedEntry> self_influence_ranking(const ScoreCache& cache, const BaseKernel& kernel) {
  std::vector<RankedEntry> entries;
  entries.reserve(cache.size());
  for (std::size_t i = 0; i < cache.size(); ++i)
    entries.push_back({cache.train_index(i), stein_kernel(kernel, cache.point(i), cache.point(i)),
                       cache.label(i)});
  return top_k_entries(std::move(entries), entries.size());
}

HdExplainer::HdExplainer(const MLPClassifier& model, ScoreCache cache, BaseKernel kernel)
    : model_(model), cache_(std::move(cache)), kernel_(kernel) {
  cache_.check_model(model_);
}

std::string_view HdExplainer::name() const {
  return cache_.variant() == Variant::kRaw ? "hd-explain" : "hd-explain-star";
}

Explanation HdExplainer::explain(const Vector& x_test, std::size_t top_k) const {
  return rank_against_cache(model_, cache_, kernel_, x_test, top_k);
}

TracInLastExplainer::TracInLastExplainer(const MLPClassifier& model, const Dataset& dataset)
    : model_(model), labels_(dataset.labels()) {
  check_dataset(model, dataset);
  const auto n = static_cast<Eigen::Index>(dataset.size());
  reps_.resize(n, static_cast<Eigen::Index>(model.representation_dim()));
  residuals_.resize(n, model.num_classes());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector h = model.representation(dataset.row(static_cast<std::size_t>(i)));
    Vector r = softmax(model.head_logits(h));
    r(dataset.label(static_cast<std::size_t>(i))) -= 1.0;
    reps_.row(i) = h.transpose();
    residuals_.row(i) = r.transpose();
  }
}

std::vector<double> TracInLastExplainer::scores(const Vector& x_test) const {
  check_test_point(model_, x_test);
  const Vector h = model_.representation(x_test);
  Vector r = softmax(model_.head_logits(h));
  r(argmax_lowest(r)) -= 1.0;
  const Vector rep_dot = reps_ * h;
  const Vector res_dot = residuals_ * r;
  std::vector<double> out(labels_.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = res_dot(static_cast<Eigen::Index>(i)) * rep_dot(static_cast<Eigen::Index>(i));
  return out;
}

Explanation TracInLastExplainer::explain(const Vector& x_test, std::size_t top_k) const {
  check_top_k(top_k, labels_.size());
  const auto t0 = Clock::now();
  Explanation e = start_explanation(model_, x_test);
  const std::vector<double> s = scores(x_test);
  std::vector<RankedEntry> entries(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) entries[i] = {i, s[i], labels_[i]};
  e.ranked = top_k_entries(std::move(entries), top_k);
  e.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0);
  return e;
}

RepSimilarityExplainer::RepSimilarityExplainer(const MLPClassifier& model, const Dataset& dataset)
    : model_(model), labels_(dataset.labels()) {
  check_dataset(model, dataset);
  const auto n = static_cast<Eigen::Index>(dataset.size());
  reps_.resize(n, static_cast<Eigen::Index>(model.representation_dim()));
  for (Eigen::Index i = 0; i < n; ++i)
    reps_.row(i) = model.representation(dataset.row(static_cast<std::size_t>(i))).transpose();
  norms_ = reps_.rowwise().norm();
}

std::vector<double> RepSimilarityExplainer::scores(const Vector& x_test) const {
  check_test_point(model_, x_test);
  const Vector h = model_.representation(x_test);
  const double hn = h.norm();
  const Vector dots = reps_ * h;
  std::vector<double> out(labels_.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double denom = norms_(static_cast<Eigen::Index>(i)) * hn;
    if (denom > 0.0)
      out[i] = std::clamp(dots(static_cast<Eigen::Index>(i)) / denom, -1.0, 1.0);
  }
  return out;
}

Explanation RepSimilarityExplainer::explain(const Vector& x_test, std::size_t top_k) const {
  check_top_k(top_k, labels_.size());
  const auto t0 = Clock::now();
  Explanation e = start_explanation(model_, x_test);
  const std::vector<double> s = scores(x_test);
  std::vector<RankedEntry> entries(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) entries[i] = {i, s[i], labels_[i]};
  e.ranked = top_k_entries(std::move(entries), top_k);
  e.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0);
  return e;
}

std::vector<RankedEntry> baseline_tracin_last(const MLPClassifier& model, const Dataset& dataset,
                                              const Vector& x_test) {
  const TracInLastExplainer ex(model, dataset);
  return ex.explain(x_test, dataset.size()).ranked;
}

std::vector<RankedEntry> baseline_rep_similarity(const MLPClassifier& model,
                                                 const Dataset& dataset, const Vector& x_test) {
  const RepSimilarityExplainer ex(model, dataset);
  return ex.explain(x_test, dataset.size()).ranked;
}

}  // namespace hdx
