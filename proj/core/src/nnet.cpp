#include "hdx/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "hdx/error.hpp"
#include "hdx/io.hpp"

namespace hdx {

namespace {

constexpr char kModelMagic[] = "HDXM";
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

Vector log_softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Vector softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

MLPClassifier::MLPClassifier(std::vector<std::size_t> layer_dims,
                             std::vector<Eigen::MatrixXd> weights, std::vector<Vector> biases)
    : dims_(std::move(layer_dims)), weights_(std::move(weights)), biases_(std::move(biases)) {
  if (dims_.size() < 2) throw ArgumentError("layer_dims needs at least input and output sizes");
  if (dims_.back() < 2) throw ArgumentError("classifier needs >= 2 classes");
  for (auto d : dims_)
    if (d == 0) throw ArgumentError("layer widths must be >= 1");
  if (weights_.size() != dims_.size() - 1 || biases_.size() != dims_.size() - 1)
    throw ArgumentError("parameter count does not match layer_dims");
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (static_cast<std::size_t>(weights_[i].rows()) != dims_[i + 1] ||
        static_cast<std::size_t>(weights_[i].cols()) != dims_[i] ||
        static_cast<std::size_t>(biases_[i].size()) != dims_[i + 1])
      throw ArgumentError("layer " + std::to_string(i) + " parameter shape mismatch");
    if (!weights_[i].allFinite() || !biases_[i].allFinite())
      throw ArgumentError("layer " + std::to_string(i) + " has non-finite parameters");
  }
}

MLPClassifier MLPClassifier::zeros(std::vector<std::size_t> layer_dims) {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Vector> b;
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    w.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layer_dims[i + 1]),
                                      static_cast<Eigen::Index>(layer_dims[i])));
    b.push_back(Vector::Zero(static_cast<Eigen::Index>(layer_dims[i + 1])));
  }
  return MLPClassifier(std::move(layer_dims), std::move(w), std::move(b));
}

MLPClassifier MLPClassifier::glorot(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
  MLPClassifier m = zeros(std::move(layer_dims));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m.weights_.size(); ++i) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.dims_[i] + m.dims_[i + 1]));
    std::uniform_real_distribution<double> u(-limit, limit);
    auto& w = m.weights_[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
  }
  return m;
}

std::size_t MLPClassifier::representation_dim() const {
  if (!has_hidden_layer()) throw UnsupportedError("model has no hidden layer");
  return dims_[dims_.size() - 2];
}

void MLPClassifier::check_input(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim())
    throw ArgumentError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(input_dim()));
  if (!x.allFinite()) throw ArgumentError("input contains non-finite values");
}

void MLPClassifier::check_class(int y) const {
  if (y < 0 || y >= num_classes())
    throw ArgumentError("class " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes()) + ")");
}

Vector MLPClassifier::representation(const Vector& x) const {
  if (!has_hidden_layer()) throw UnsupportedError("model has no hidden layer");
  check_input(x);
  Vector a = x;
  for (std::size_t i = 0; i + 1 < weights_.size(); ++i)
    a = (weights_[i] * a + biases_[i]).array().tanh();
  return a;
}

Vector MLPClassifier::head_logits(const Vector& h) const {
  if (h.size() != weights_.back().cols())
    throw ArgumentError("representation has dimension " + std::to_string(h.size()) +
                        ", head expects " + std::to_string(weights_.back().cols()));
  return weights_.back() * h + biases_.back();
}

Vector MLPClassifier::logits(const Vector& x) const {
  check_input(x);
  Vector a = x;
  for (std::size_t i = 0; i + 1 < weights_.size(); ++i)
    a = (weights_[i] * a + biases_[i]).array().tanh();
  return weights_.back() * a + biases_.back();
}

Vector MLPClassifier::predict_proba(const Vector& x) const { return softmax(logits(x)); }

Vector MLPClassifier::log_proba(const Vector& x) const { return log_softmax(logits(x)); }

int MLPClassifier::predict(const Vector& x) const {
  const Vector z = logits(x);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < z.size(); ++c)
    if (z(c) > z(best)) best = c;
  return static_cast<int>(best);
}

Vector MLPClassifier::input_gradient(const Vector& x, int y) const {
  check_input(x);
  check_class(y);
  std::vector<Vector> acts;
  acts.reserve(weights_.size());
  acts.push_back(x);
  for (std::size_t i = 0; i + 1 < weights_.size(); ++i)
    acts.push_back((weights_[i] * acts.back() + biases_[i]).array().tanh());
  const Vector z = weights_.back() * acts.back() + biases_.back();

  Vector delta = -softmax(z);
  delta(y) += 1.0;
  Vector g = weights_.back().transpose() * delta;
  for (std::size_t i = weights_.size() - 1; i-- > 0;) {
    const Vector& a = acts[i + 1];
    g = weights_[i].transpose() * (g.array() * (1.0 - a.array().square())).matrix();
  }
  return g;
}

Vector MLPClassifier::rep_gradient(const Vector& h, int y) const {
  check_class(y);
  Vector delta = -softmax(head_logits(h));
  delta(y) += 1.0;
  return weights_.back().transpose() * delta;
}

double MLPClassifier::accuracy(const Dataset& dataset) const {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (predict(dataset.row(i)) == dataset.label(i)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

double MLPClassifier::mean_cross_entropy(const Dataset& dataset) const {
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    total -= log_proba(dataset.row(i))(dataset.label(i));
  return total / static_cast<double>(dataset.size());
}

std::vector<char> MLPClassifier::serialize() const {
  detail::ByteWriter w;
  w.bytes(std::string_view(kModelMagic, 4));
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(dims_.size()));
  for (auto d : dims_) w.u32(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const auto& m = weights_[i];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
    for (Eigen::Index r = 0; r < biases_[i].size(); ++r) w.f64(biases_[i](r));
  }
  return w.buffer();
}

MLPClassifier MLPClassifier::deserialize(const std::vector<char>& bytes) {
  detail::ByteReader r(bytes, "model");
  if (r.bytes(4) != std::string_view(kModelMagic, 4)) throw FormatError("model: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw FormatError("model: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  if (count < 2 || count > 64) throw FormatError("model: implausible layer count");
  std::vector<std::size_t> dims(count);
  for (auto& d : dims) d = r.u32();

  std::vector<Eigen::MatrixXd> weights;
  std::vector<Vector> biases;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t need = (dims[i + 1] * dims[i] + dims[i + 1]) * 8;
    if (r.remaining() < need) throw FormatError("model: truncated file");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(dims[i + 1]), static_cast<Eigen::Index>(dims[i]));
    for (Eigen::Index row = 0; row < m.rows(); ++row)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(row, c) = r.f64();
    Vector b(static_cast<Eigen::Index>(dims[i + 1]));
    for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = r.f64();
    weights.push_back(std::move(m));
    biases.push_back(std::move(b));
  }
  if (r.remaining() != 0) throw FormatError("model: trailing bytes");
  try {
    return MLPClassifier(std::move(dims), std::move(weights), std::move(biases));
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

std::uint64_t MLPClassifier::fingerprint() const { return detail::fnv1a64(serialize()); }

void save_model(const MLPClassifier& model, const std::string& path) {
  const std::vector<char> bytes = model.serialize();
  write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

MLPClassifier load_model(const std::string& path) {
  return MLPClassifier::deserialize(read_file(path));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must be in [0, 1)");
  if (!(l2_weight_decay >= 0.0)) throw ArgumentError("l2_weight_decay must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ArgumentError("validation_fraction must be in [0, 1)");
  for (auto h : hidden)
    if (h == 0) throw ArgumentError("hidden widths must be >= 1");
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.classes_present() < 2)
    throw ArgumentError("training data must contain at least two classes");

  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> train_idx = order;
  std::vector<std::size_t> val_idx;
  if (config.validation_fraction > 0.0) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(
        std::floor(config.validation_fraction * static_cast<double>(dataset.size())));
    if (n_val >= dataset.size()) throw ArgumentError("validation split leaves no training data");
    val_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
  }
  const Dataset train_set = dataset.subset(train_idx);

  std::vector<std::size_t> dims;
  dims.push_back(dataset.dim());
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(static_cast<std::size_t>(dataset.num_classes()));
  MLPClassifier model = MLPClassifier::glorot(dims, rng());

  auto& W = model.mutable_weights();
  auto& B = model.mutable_biases();
  const std::size_t layers = W.size();
  std::vector<Eigen::MatrixXd> vel_w;
  std::vector<Vector> vel_b;
  for (std::size_t i = 0; i < layers; ++i) {
    vel_w.push_back(Eigen::MatrixXd::Zero(W[i].rows(), W[i].cols()));
    vel_b.push_back(Vector::Zero(B[i].size()));
  }

  const Eigen::MatrixXd x_all = train_set.features().transpose();  // d x n
  const std::size_t n = train_set.size();
  const auto classes = static_cast<Eigen::Index>(dataset.num_classes());

  TrainResult result{model, 0.0, std::numeric_limits<double>::quiet_NaN(), {}};
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<Eigen::MatrixXd> acts(layers);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const auto bs = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd xb(x_all.rows(), bs);
      Eigen::MatrixXd target = Eigen::MatrixXd::Zero(classes, bs);
      for (Eigen::Index k = 0; k < bs; ++k) {
        const std::size_t idx = perm[start + static_cast<std::size_t>(k)];
        xb.col(k) = x_all.col(static_cast<Eigen::Index>(idx));
        target(train_set.label(idx), k) = 1.0;
      }

      acts[0] = xb;
      for (std::size_t i = 0; i + 1 < layers; ++i)
        acts[i + 1] = ((W[i] * acts[i]).colwise() + B[i]).array().tanh();
      Eigen::MatrixXd z = (W.back() * acts.back()).colwise() + B.back();
      for (Eigen::Index k = 0; k < bs; ++k) z.col(k) = softmax(z.col(k));

      // dL/dz for mean cross-entropy.
      Eigen::MatrixXd delta = (z - target) / static_cast<double>(bs);
      for (std::size_t i = layers; i-- > 0;) {
        Eigen::MatrixXd grad_w = delta * acts[i].transpose() + config.l2_weight_decay * W[i];
        Vector grad_b = delta.rowwise().sum();
        if (i > 0) {
          delta = (W[i].transpose() * delta).array() * (1.0 - acts[i].array().square());
        }
        vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * grad_w;
        vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * grad_b;
        W[i] += vel_w[i];
        B[i] += vel_b[i];
      }
    }

    const double loss = model.mean_cross_entropy(train_set);
    bool finite = std::isfinite(loss);
    for (std::size_t i = 0; i < layers && finite; ++i)
      finite = W[i].allFinite() && B[i].allFinite();
    if (!finite)
      throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                         " (non-finite loss)");
    result.loss_history.push_back(loss);
  }

  result.train_accuracy = model.accuracy(train_set);
  if (!val_idx.empty()) result.validation_accuracy = model.accuracy(dataset.subset(val_idx));
  result.model = std::move(model);
  return result;
}

}  // namespace hdx
