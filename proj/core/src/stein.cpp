#include "hdx/stein.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "hdx/error.hpp"
#include "hdx/io.hpp"

namespace hdx {

namespace {

constexpr char kCacheMagic[] = "HDXC";
constexpr std::uint32_t kCacheVersion = 1;

thread_local std::uint64_t t_stein_evaluations = 0;

void check_same_dim(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw ArgumentError("kernel arguments differ in dimension (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
}

}  // namespace

std::string_view to_string(Variant v) { return v == Variant::kRaw ? "raw" : "last-layer"; }

Variant parse_variant(std::string_view s) {
  if (s == "raw") return Variant::kRaw;
  if (s == "last-layer" || s == "last_layer") return Variant::kLastLayer;
  throw ArgumentError("unknown variant '" + std::string(s) + "' (expected raw|last-layer)");
}

std::string_view to_string(BaseKernel::Type t) {
  switch (t) {
    case BaseKernel::Type::kLinear: return "linear";
    case BaseKernel::Type::kRbf: return "rbf";
    case BaseKernel::Type::kImq: return "imq";
  }
  return "unknown";
}

BaseKernel::Type parse_kernel_type(std::string_view s) {
  if (s == "linear") return BaseKernel::Type::kLinear;
  if (s == "rbf") return BaseKernel::Type::kRbf;
  if (s == "imq") return BaseKernel::Type::kImq;
  throw ArgumentError("unknown kernel '" + std::string(s) + "' (expected linear|rbf|imq)");
}

BaseKernel BaseKernel::linear() { return BaseKernel(Type::kLinear, 0.0, 0.0, 0.0); }

BaseKernel BaseKernel::rbf(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ArgumentError("rbf gamma must be > 0");
  return BaseKernel(Type::kRbf, gamma, 0.0, 0.0);
}

BaseKernel BaseKernel::imq(double c, double beta) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ArgumentError("imq c must be > 0");
  if (!(beta > -1.0 && beta < 0.0)) throw ArgumentError("imq beta must lie in (-1, 0)");
  return BaseKernel(Type::kImq, 0.0, c, beta);
}

std::string BaseKernel::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (type_) {
    case Type::kLinear: os << "linear"; break;
    case Type::kRbf: os << "rbf(gamma=" << gamma_ << ")"; break;
    case Type::kImq: os << "imq(c=" << c_ << ", beta=" << beta_ << ")"; break;
  }
  return os.str();
}

double BaseKernel::eval(const Vector& a, const Vector& b) const {
  check_same_dim(a, b);
  switch (type_) {
    case Type::kLinear: return a.dot(b);
    case Type::kRbf: return std::exp(-gamma_ * (a - b).squaredNorm());
    case Type::kImq: return std::pow(c_ * c_ + (a - b).squaredNorm(), beta_);
  }
  return 0.0;
}

Vector BaseKernel::grad_a(const Vector& a, const Vector& b) const {
  check_same_dim(a, b);
  switch (type_) {
    case Type::kLinear: return b;
    case Type::kRbf: {
      const Vector diff = a - b;
      return -2.0 * gamma_ * std::exp(-gamma_ * diff.squaredNorm()) * diff;
    }
    case Type::kImq: {
      const Vector diff = a - b;
      return 2.0 * beta_ * std::pow(c_ * c_ + diff.squaredNorm(), beta_ - 1.0) * diff;
    }
  }
  return Vector();
}

Vector BaseKernel::grad_b(const Vector& a, const Vector& b) const {
  if (type_ == Type::kLinear) {
    check_same_dim(a, b);
    return a;
  }
  // Stationary kernels: k depends on a - b only.
  return -grad_a(a, b);
}

double BaseKernel::trace_hessian(const Vector& a, const Vector& b) const {
  check_same_dim(a, b);
  const auto dim = static_cast<double>(a.size());
  switch (type_) {
    case Type::kLinear: return dim;
    case Type::kRbf: {
      const double r2 = (a - b).squaredNorm();
      return (2.0 * gamma_ * dim - 4.0 * gamma_ * gamma_ * r2) * std::exp(-gamma_ * r2);
    }
    case Type::kImq: {
      const double r2 = (a - b).squaredNorm();
      const double q = c_ * c_ + r2;
      return -2.0 * beta_ * dim * std::pow(q, beta_ - 1.0) -
             4.0 * beta_ * (beta_ - 1.0) * r2 * std::pow(q, beta_ - 2.0);
    }
  }
  return 0.0;
}

std::size_t stein_dim(const MLPClassifier& model, Variant variant) {
  const std::size_t base =
      variant == Variant::kRaw ? model.input_dim() : model.representation_dim();
  return base + static_cast<std::size_t>(model.num_classes());
}

SteinPoint make_stein_point(const MLPClassifier& model, const Vector& x, int y, Variant variant) {
  const int l = model.num_classes();
  if (y < 0 || y >= l)
    throw ArgumentError("class " + std::to_string(y) + " outside [0, " + std::to_string(l) + ")");
  Vector features;
  Vector grad;
  if (variant == Variant::kRaw) {
    features = x;
    grad = model.input_gradient(x, y);
  } else {
    features = model.representation(x);
    grad = model.rep_gradient(features, y);
  }
  const Vector logp = model.log_proba(x);

  const auto base = features.size();
  SteinPoint p;
  p.z.resize(base + l);
  p.z << features, one_hot(y, l);
  p.score.resize(base + l);
  p.score << grad, logp;
  return p;
}

SteinTerms stein_kernel_terms(const BaseKernel& k, const SteinPoint& a, const SteinPoint& b) {
  const Eigen::Index dim = a.z.size();
  if (b.z.size() != dim || a.score.size() != dim || b.score.size() != dim)
    throw ArgumentError("stein points differ in dimension");

  SteinTerms t;
  const double score_dot = a.score.dot(b.score);
  switch (k.type()) {
    case BaseKernel::Type::kLinear: {
      t.trace_hessian = static_cast<double>(dim);
      t.kernel_score = a.z.dot(b.z) * score_dot;
      t.grad_a_score = b.z.dot(b.score);
      t.grad_b_score = a.z.dot(a.score);
      break;
    }
    case BaseKernel::Type::kRbf: {
      const double g = k.gamma();
      double r2 = 0.0;
      double diff_sb = 0.0;
      double diff_sa = 0.0;
      for (Eigen::Index i = 0; i < dim; ++i) {
        const double d = a.z(i) - b.z(i);
        r2 += d * d;
        diff_sb += d * b.score(i);
        diff_sa += d * a.score(i);
      }
      const double kv = std::exp(-g * r2);
      t.trace_hessian = (2.0 * g * static_cast<double>(dim) - 4.0 * g * g * r2) * kv;
      t.kernel_score = kv * score_dot;
      t.grad_a_score = -2.0 * g * kv * diff_sb;
      t.grad_b_score = 2.0 * g * kv * diff_sa;
      break;
    }
    case BaseKernel::Type::kImq: {
      const double c2 = k.c() * k.c();
      const double beta = k.beta();
      double r2 = 0.0;
      double diff_sb = 0.0;
      double diff_sa = 0.0;
      for (Eigen::Index i = 0; i < dim; ++i) {
        const double d = a.z(i) - b.z(i);
        r2 += d * d;
        diff_sb += d * b.score(i);
        diff_sa += d * a.score(i);
      }
      const double q = c2 + r2;
      const double kv = std::pow(q, beta);
      const double kv1 = kv / q;
      const double kv2 = kv1 / q;
      t.trace_hessian = -2.0 * beta * static_cast<double>(dim) * kv1 -
                        4.0 * beta * (beta - 1.0) * r2 * kv2;
      t.kernel_score = kv * score_dot;
      t.grad_a_score = 2.0 * beta * kv1 * diff_sb;
      t.grad_b_score = -2.0 * beta * kv1 * diff_sa;
      break;
    }
  }
  return t;
}

double stein_kernel(const BaseKernel& k, const SteinPoint& a, const SteinPoint& b) {
  ++t_stein_evaluations;
  return stein_kernel_terms(k, a, b).total();
}

std::uint64_t stein_kernel_evaluations() {
  return t_stein_evaluations;
}

Eigen::MatrixXd stein_gram(std::span<const SteinPoint> points, const BaseKernel& k) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      g(i, j) = stein_kernel(k, points[static_cast<std::size_t>(i)],
                             points[static_cast<std::size_t>(j)]);
      g(j, i) = g(i, j);
    }
  }
  return g;
}

namespace {

struct PairSums {
  double diagonal = 0.0;
  double off_upper = 0.0;  // sum over i < j
  double std_error = 0.0;
};

PairSums pair_sums(std::span<const SteinPoint> points, const BaseKernel& k) {
  const std::size_t n = points.size();
  PairSums s;
  std::vector<double> upper;
  upper.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    s.diagonal += stein_kernel(k, points[i], points[i]);
    for (std::size_t j = i + 1; j < n; ++j) upper.push_back(stein_kernel(k, points[i], points[j]));
  }
  for (double v : upper) s.off_upper += v;
  const std::size_t m = upper.size();
  if (m >= 2) {
    const double mean = s.off_upper / static_cast<double>(m);
    double ss = 0.0;
    for (double v : upper) ss += (v - mean) * (v - mean);
    s.std_error = std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m));
  }
  return s;
}

}  // namespace

KsdEstimate ksd_vstat(std::span<const SteinPoint> points, const BaseKernel& k) {
  if (points.empty()) throw ArgumentError("KSD estimate needs at least one point");
  const PairSums s = pair_sums(points, k);
  const auto n = static_cast<double>(points.size());
  return {(s.diagonal + 2.0 * s.off_upper) / (n * n), s.std_error};
}

KsdEstimate ksd_ustat(std::span<const SteinPoint> points, const BaseKernel& k) {
  if (points.size() < 2) throw ArgumentError("U-statistic needs at least two points");
  const PairSums s = pair_sums(points, k);
  const auto n = static_cast<double>(points.size());
  return {2.0 * s.off_upper / (n * (n - 1.0)), s.std_error};
}

double median_heuristic_gamma(std::span<const Vector> points, std::uint64_t seed,
                              std::size_t max_points) {
  if (points.size() < 2) throw ArgumentError("median heuristic needs at least two points");
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (max_points >= 2 && idx.size() > max_points) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<double> dist;
  dist.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      check_same_dim(points[idx[i]], points[idx[j]]);
      dist.push_back((points[idx[i]] - points[idx[j]]).norm());
    }
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) return 1.0;
  return 1.0 / (2.0 * median * median);
}

BaseKernel resolve_kernel(const KernelSpec& spec, std::span<const SteinPoint> points,
                          std::uint64_t seed) {
  switch (spec.type) {
    case BaseKernel::Type::kLinear: return BaseKernel::linear();
    case BaseKernel::Type::kImq: return BaseKernel::imq(spec.c, spec.beta);
    case BaseKernel::Type::kRbf: {
      if (spec.gamma) return BaseKernel::rbf(*spec.gamma);
      std::vector<Vector> zs;
      zs.reserve(points.size());
      for (const auto& p : points) zs.push_back(p.z);
      return BaseKernel::rbf(median_heuristic_gamma(zs, seed));
    }
  }
  throw ArgumentError("unknown kernel type");
}

ScoreCache::ScoreCache(std::uint64_t model_fingerprint, Variant variant,
                       std::vector<SteinPoint> points, std::vector<int> labels,
                       std::vector<std::size_t> train_indices)
    : fingerprint_(model_fingerprint),
      variant_(variant),
      points_(std::move(points)),
      labels_(std::move(labels)),
      train_indices_(std::move(train_indices)) {
  if (points_.empty()) throw ArgumentError("score cache needs at least one point");
  if (labels_.size() != points_.size()) throw ArgumentError("score cache label count mismatch");
  const std::size_t d = points_.front().dim();
  for (const auto& p : points_)
    if (p.dim() != d || static_cast<std::size_t>(p.score.size()) != d)
      throw ArgumentError("score cache points differ in dimension");
  if (train_indices_.empty()) {
    train_indices_.resize(points_.size());
    std::iota(train_indices_.begin(), train_indices_.end(), 0);
  }
  if (train_indices_.size() != points_.size())
    throw ArgumentError("score cache index count mismatch");
  std::vector<std::size_t> sorted = train_indices_;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    if (sorted[i] != i) throw ArgumentError("score cache indices must be a permutation of [0, n)");
}

ScoreCache ScoreCache::permuted(const std::vector<std::size_t>& order) const {
  if (order.size() != size()) throw ArgumentError("permutation size mismatch");
  std::vector<SteinPoint> pts;
  std::vector<int> labels;
  std::vector<std::size_t> idx;
  std::vector<bool> seen(size(), false);
  for (std::size_t o : order) {
    if (o >= size() || seen[o]) throw ArgumentError("not a permutation");
    seen[o] = true;
    pts.push_back(points_[o]);
    labels.push_back(labels_[o]);
    idx.push_back(train_indices_[o]);
  }
  return ScoreCache(fingerprint_, variant_, std::move(pts), std::move(labels), std::move(idx));
}

void ScoreCache::check_model(const MLPClassifier& model) const {
  if (model.fingerprint() != fingerprint_) {
    std::ostringstream os;
    os << "cache fingerprint " << std::hex << fingerprint_ << " does not match model "
       << model.fingerprint();
    throw StaleCacheError(os.str());
  }
  if (stein_dim(model, variant_) != dim())
    throw ArgumentError("cache dimension does not fit the model");
}

std::vector<char> ScoreCache::serialize() const {
  std::vector<std::size_t> pos(size());
  for (std::size_t i = 0; i < size(); ++i) pos[train_indices_[i]] = i;

  detail::ByteWriter w;
  w.bytes(std::string_view(kCacheMagic, 4));
  w.u32(kCacheVersion);
  w.u8(static_cast<std::uint8_t>(variant_));
  w.u64(fingerprint_);
  w.u64(size());
  w.u64(dim());
  for (std::size_t t = 0; t < size(); ++t) {
    const SteinPoint& p = points_[pos[t]];
    for (Eigen::Index i = 0; i < p.z.size(); ++i) w.f64(p.z(i));
    for (Eigen::Index i = 0; i < p.score.size(); ++i) w.f64(p.score(i));
    w.u32(static_cast<std::uint32_t>(labels_[pos[t]]));
  }
  return w.buffer();
}

ScoreCache ScoreCache::deserialize(const std::vector<char>& bytes) {
  detail::ByteReader r(bytes, "cache");
  if (r.bytes(4) != std::string_view(kCacheMagic, 4)) throw FormatError("cache: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCacheVersion)
    throw FormatError("cache: unsupported version " + std::to_string(version));
  const std::uint8_t variant = r.u8();
  if (variant > 1) throw FormatError("cache: unknown variant byte");
  const std::uint64_t fp = r.u64();
  const std::uint64_t n = r.u64();
  const std::uint64_t d = r.u64();
  if (n == 0 || d == 0) throw FormatError("cache: empty");
  if (r.remaining() / n < d * 16 + 4 || r.remaining() != n * (d * 16 + 4))
    throw FormatError("cache: truncated file");

  std::vector<SteinPoint> points(n);
  std::vector<int> labels(n);
  for (std::uint64_t t = 0; t < n; ++t) {
    points[t].z.resize(static_cast<Eigen::Index>(d));
    points[t].score.resize(static_cast<Eigen::Index>(d));
    for (std::uint64_t i = 0; i < d; ++i) points[t].z(static_cast<Eigen::Index>(i)) = r.f64();
    for (std::uint64_t i = 0; i < d; ++i) points[t].score(static_cast<Eigen::Index>(i)) = r.f64();
    labels[t] = static_cast<int>(r.u32());
  }
  return ScoreCache(fp, static_cast<Variant>(variant), std::move(points), std::move(labels));
}

void save_cache(const ScoreCache& cache, const std::string& path) {
  const std::vector<char> bytes = cache.serialize();
  write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

ScoreCache load_cache(const std::string& path) { return ScoreCache::deserialize(read_file(path)); }

}  // namespace hdx
