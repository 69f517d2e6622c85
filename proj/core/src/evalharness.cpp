#include "hdx/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hdx/error.hpp"

namespace hdx {

std::string_view to_string(Augmentation a) {
  switch (a) {
    case Augmentation::kIdentity: return "identity";
    case Augmentation::kNoise: return "noise";
    case Augmentation::kHorizontalFlip: return "hflip";
  }
  return "unknown";
}

Augmentation parse_augmentation(std::string_view s) {
  if (s == "identity" || s == "none") return Augmentation::kIdentity;
  if (s == "noise") return Augmentation::kNoise;
  if (s == "hflip") return Augmentation::kHorizontalFlip;
  throw ArgumentError("unknown augmentation '" + std::string(s) + "' (expected identity|noise|hflip)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed ^ (salt * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Vector augment_noise(const Dataset& dataset, std::size_t index, std::uint64_t seed) {
  if (index >= dataset.size()) throw ArgumentError("augment index out of range");
  Vector x = dataset.row(index);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double eps = unit(rng);
    x(j) += 0.01 * dataset.feature_std()(j) * eps;
  }
  return x;
}

Vector flip_horizontal(const Vector& image, const ImageShape& shape) {
  if (static_cast<std::size_t>(image.size()) != shape.size())
    throw ArgumentError("image size does not match its shape");
  Vector out(image.size());
  for (std::size_t h = 0; h < shape.height; ++h)
    for (std::size_t w = 0; w < shape.width; ++w)
      for (std::size_t c = 0; c < shape.channels; ++c) {
        const auto src = static_cast<Eigen::Index>((h * shape.width + (shape.width - 1 - w)) *
                                                       shape.channels + c);
        const auto dst = static_cast<Eigen::Index>((h * shape.width + w) * shape.channels + c);
        out(dst) = image(src);
      }
  return out;
}

Vector augment_hflip(const Dataset& dataset, std::size_t index) {
  if (!dataset.image_shape())
    throw UnsupportedError("horizontal flip needs a dataset with an image shape");
  if (index >= dataset.size()) throw ArgumentError("augment index out of range");
  return flip_horizontal(dataset.row(index), *dataset.image_shape());
}

double coverage(const std::vector<std::vector<std::size_t>>& explanation_sets) {
  if (explanation_sets.empty()) throw ArgumentError("coverage needs at least one explanation set");
  const std::size_t k = explanation_sets.front().size();
  if (k == 0) throw ArgumentError("coverage needs non-empty explanation sets");
  std::unordered_set<std::size_t> seen;
  for (const auto& s : explanation_sets) {
    if (s.size() != k) throw ArgumentError("explanation sets have ragged sizes");
    seen.insert(s.begin(), s.end());
  }
  return static_cast<double>(seen.size()) /
         (static_cast<double>(explanation_sets.size()) * static_cast<double>(k));
}

const KMetrics& MetricsReport::at(std::size_t k) const {
  for (const auto& m : per_k)
    if (m.k == k) return m;
  throw ArgumentError("no metrics recorded for k=" + std::to_string(k));
}

std::string MetricsReport::csv_header() {
  return "method,k,hit_rate,coverage,mean_ms,ci95_ms,trials,seed\n";
}

std::string MetricsReport::csv_rows() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& m : per_k)
    os << method << ',' << m.k << ',' << m.hit_rate << ',' << m.coverage << ',' << mean_ms << ','
       << ci95_ms << ',' << trials << ',' << seed << '\n';
  return os.str();
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  nlohmann::json ks = nlohmann::json::array();
  for (const auto& m : per_k)
    ks.push_back({{"k", m.k}, {"hit_rate", m.hit_rate}, {"coverage", m.coverage}});
  j["per_k"] = std::move(ks);
  j["mean_ms"] = mean_ms;
  j["ci95_ms"] = ci95_ms;
  j["trials"] = trials;
  j["seed"] = seed;
  return j.dump(2);
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  if (count > n) throw ArgumentError("sample size exceeds population");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

MetricsReport hit_rate_experiment(const Explainer& explainer, const Dataset& dataset,
                                  const HitRateConfig& config) {
  if (config.sample_size < 1 || config.sample_size > dataset.size())
    throw ArgumentError("sample_size must lie in [1, n]");
  if (config.trials_per_point < 1) throw ArgumentError("trials_per_point must be >= 1");
  if (config.ks.empty()) throw ArgumentError("need at least one k");
  if (explainer.train_size() != dataset.size())
    throw ArgumentError("explainer and dataset sizes differ");
  if (config.augmentation == Augmentation::kHorizontalFlip && !dataset.image_shape())
    throw UnsupportedError("horizontal flip needs a dataset with an image shape");
  const std::size_t max_k = *std::max_element(config.ks.begin(), config.ks.end());
  if (*std::min_element(config.ks.begin(), config.ks.end()) < 1 || max_k > dataset.size())
    throw ArgumentError("every k must lie in [1, n]");

  const std::vector<std::size_t> sources =
      sample_indices(dataset.size(), config.sample_size, derive_seed(config.seed, 0));

  std::vector<std::size_t> hits(config.ks.size(), 0);
  std::vector<std::vector<std::vector<std::size_t>>> sets(config.ks.size());
  std::vector<double> times_ms;
  std::size_t query = 0;
  for (std::size_t src : sources) {
    for (std::size_t t = 0; t < config.trials_per_point; ++t, ++query) {
      Vector x;
      switch (config.augmentation) {
        case Augmentation::kIdentity: x = dataset.row(src); break;
        case Augmentation::kNoise:
          x = augment_noise(dataset, src, derive_seed(config.seed, query + 1));
          break;
        case Augmentation::kHorizontalFlip: x = augment_hflip(dataset, src); break;
      }
      const Explanation e = explainer.explain(x, max_k);
      times_ms.push_back(e.elapsed_ms());
      for (std::size_t ki = 0; ki < config.ks.size(); ++ki) {
        const std::size_t k = config.ks[ki];
        std::vector<std::size_t> top;
        for (std::size_t r = 0; r < k; ++r) top.push_back(e.ranked[r].train_index);
        if (std::find(top.begin(), top.end(), src) != top.end()) ++hits[ki];
        sets[ki].push_back(std::move(top));
      }
    }
  }

  MetricsReport report;
  report.method = std::string(explainer.name());
  report.trials = query;
  report.seed = config.seed;
  for (std::size_t ki = 0; ki < config.ks.size(); ++ki)
    report.per_k.push_back({config.ks[ki], static_cast<double>(hits[ki]) / static_cast<double>(query),
                            coverage(sets[ki])});
  const double n = static_cast<double>(times_ms.size());
  const double mean = std::accumulate(times_ms.begin(), times_ms.end(), 0.0) / n;
  double ss = 0.0;
  for (double t : times_ms) ss += (t - mean) * (t - mean);
  report.mean_ms = mean;
  report.ci95_ms = times_ms.size() > 1 ? 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  return report;
}

FlippedLabels flip_labels(const std::vector<int>& labels, int num_classes, std::size_t count,
                          std::uint64_t seed) {
  if (num_classes < 2) throw ArgumentError("flipping needs >= 2 classes");
  FlippedLabels out;
  out.labels = labels;
  out.flipped = sample_indices(labels.size(), count, seed);
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::uniform_int_distribution<int> other(1, num_classes - 1);
  for (std::size_t i : out.flipped) out.labels[i] = (labels[i] + other(rng)) % num_classes;
  return out;
}

PrecisionRecall precision_recall_at(const std::vector<RankedEntry>& ranking,
                                    const std::vector<std::size_t>& flipped, std::size_t m) {
  if (m < 1 || m > ranking.size()) throw ArgumentError("m must lie in [1, ranking size]");
  if (flipped.empty()) throw ArgumentError("no flipped points");
  const std::set<std::size_t> bad(flipped.begin(), flipped.end());
  std::size_t found = 0;
  for (std::size_t r = 0; r < m; ++r)
    if (bad.count(ranking[r].train_index)) ++found;
  return {m, static_cast<double>(found) / static_cast<double>(m),
          static_cast<double>(found) / static_cast<double>(bad.size())};
}

std::string DebugReport::csv_header() { return "method,m,precision,recall,flip_count,seed\n"; }

std::string DebugReport::csv_rows(std::uint64_t seed) const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& pr : curve)
    os << method << ',' << pr.m << ',' << pr.precision << ',' << pr.recall << ',' << flip_count
       << ',' << seed << '\n';
  return os.str();
}

std::vector<DebugReport> label_flip_debug_experiment(const Dataset& dataset, double flip_fraction,
                                                     const TrainConfig& train_config,
                                                     const KernelSpec& kernel, std::uint64_t seed,
                                                     const std::vector<Variant>& variants) {
  if (!(flip_fraction > 0.0 && flip_fraction < 0.5))
    throw ArgumentError("flip_fraction must lie in (0, 0.5)");
  const auto flips = static_cast<std::size_t>(
      std::ceil(flip_fraction * static_cast<double>(dataset.size()) - 1e-9));
  if (flips < 1) throw ArgumentError("flip count must be >= 1");

  const FlippedLabels corrupted =
      flip_labels(dataset.labels(), dataset.num_classes(), flips, derive_seed(seed, 0x5eed));
  const Dataset noisy = dataset.with_labels(corrupted.labels);
  const TrainResult trained = train(noisy, train_config);

  const std::vector<std::size_t> ms = {(flips + 1) / 2, flips, std::min(2 * flips, dataset.size())};
  std::vector<DebugReport> reports;
  for (Variant v : variants) {
    const ScoreCache cache = build_cache(trained.model, noisy, v);
    const BaseKernel k = resolve_kernel(kernel, cache.points(), seed);
    const std::vector<RankedEntry> ranking = self_influence_ranking(cache, k);
    DebugReport r;
    r.method = v == Variant::kRaw ? "hd-explain" : "hd-explain-star";
    r.flip_count = flips;
    r.flipped = corrupted.flipped;
    r.train_accuracy = trained.train_accuracy;
    for (std::size_t m : ms) r.curve.push_back(precision_recall_at(ranking, corrupted.flipped, m));
    reports.push_back(std::move(r));
  }
  return reports;
}

Vector default_shift_direction(const Dataset& dataset) {
  Eigen::Index axis = 0;
  const Vector& sd = dataset.feature_std();
  for (Eigen::Index j = 1; j < sd.size(); ++j)
    if (sd(j) < sd(axis)) axis = j;
  Vector dir = Vector::Zero(sd.size());
  dir(axis) = 1.0;
  return dir;
}

std::vector<Vector> shifts_along(const std::vector<double>& magnitudes, const Vector& direction) {
  const double norm = direction.norm();
  if (!(norm > 0.0) || !direction.allFinite())
    throw ArgumentError("shift direction must be a finite non-zero vector");
  std::vector<Vector> out;
  for (double s : magnitudes) {
    if (!std::isfinite(s)) throw ArgumentError("shift magnitude must be finite");
    out.push_back(direction * (s / norm));
  }
  return out;
}

std::vector<ShiftResult> ksd_shift_experiment(const MLPClassifier& model, const Dataset& dataset,
                                              std::vector<Vector> shifts,
                                              const BaseKernel& kernel, Variant variant) {
  const auto d = static_cast<Eigen::Index>(dataset.dim());
  if (shifts.empty() || !(shifts.front().size() == d && shifts.front().isZero(0.0)))
    shifts.insert(shifts.begin(), Vector::Zero(d));

  std::vector<ShiftResult> out;
  for (const Vector& delta : shifts) {
    if (delta.size() != d)
      throw ArgumentError("shift has dimension " + std::to_string(delta.size()) +
                          ", dataset has " + std::to_string(d));
    std::vector<SteinPoint> points;
    points.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i)
      points.push_back(make_stein_point(model, dataset.row(i) + delta, dataset.label(i), variant));
    out.push_back({delta, delta.norm(), ksd_vstat(points, kernel)});
  }
  return out;
}

}  // namespace hdx
