#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdx/data.hpp"

namespace hdx {

// Feed-forward classifier: tanh hidden layers, affine output, softmax.
// Layer i maps layer_dims[i] -> layer_dims[i+1]; weights are stored as
// (out x in) matrices.
class MLPClassifier {
 public:
  MLPClassifier(std::vector<std::size_t> layer_dims, std::vector<Eigen::MatrixXd> weights,
                std::vector<Vector> biases);

  // All parameters zero: uniform predictions, zero gradients.
  static MLPClassifier zeros(std::vector<std::size_t> layer_dims);
  // Glorot-uniform weights, zero biases.
  static MLPClassifier glorot(std::vector<std::size_t> layer_dims, std::uint64_t seed);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }
  std::size_t input_dim() const { return dims_.front(); }
  int num_classes() const { return static_cast<int>(dims_.back()); }
  std::size_t num_layers() const { return weights_.size(); }
  bool has_hidden_layer() const { return weights_.size() >= 2; }
  std::size_t representation_dim() const;

  Vector logits(const Vector& x) const;
  Vector predict_proba(const Vector& x) const;
  // logit - logsumexp(logits), never log(softmax).
  Vector log_proba(const Vector& x) const;
  // Lowest index among the maximal probabilities.
  int predict(const Vector& x) const;

  // d/dx log p(y | x), by backpropagation.
  Vector input_gradient(const Vector& x, int y) const;

  // Output of the last hidden layer.
  Vector representation(const Vector& x) const;
  // d/dh log softmax(W h + b)[y] = W^T (e_y - p) for the final layer (W, b).
  Vector rep_gradient(const Vector& h, int y) const;
  // Logits of the final layer given a representation.
  Vector head_logits(const Vector& h) const;

  const Eigen::MatrixXd& head_weight() const { return weights_.back(); }
  const Vector& head_bias() const { return biases_.back(); }

  double accuracy(const Dataset& dataset) const;
  double mean_cross_entropy(const Dataset& dataset) const;

  // Mutable parameter access for the trainer and for tests that perturb a model.
  std::vector<Eigen::MatrixXd>& mutable_weights() { return weights_; }
  std::vector<Vector>& mutable_biases() { return biases_; }

  // Serialized "HDXM" bytes.
  std::vector<char> serialize() const;
  static MLPClassifier deserialize(const std::vector<char>& bytes);
  // FNV-1a 64 over serialize().
  std::uint64_t fingerprint() const;

 private:
  void check_input(const Vector& x) const;
  void check_class(int y) const;

  std::vector<std::size_t> dims_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Vector> biases_;
};

struct TrainConfig {
  std::vector<std::size_t> hidden = {32, 32};
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double l2_weight_decay = 1e-3;
  double validation_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  MLPClassifier model;
  double train_accuracy = 0.0;
  // NaN when validation_fraction == 0.
  double validation_accuracy = 0.0;
  // Mean cross-entropy over the training split after each epoch.
  std::vector<double> loss_history;
};

// Mini-batch SGD with momentum on mean cross-entropy plus 0.5 * l2 * |W|^2.
// Deterministic for a fixed config.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

void save_model(const MLPClassifier& model, const std::string& path);
MLPClassifier load_model(const std::string& path);

Vector log_softmax(const Vector& logits);
Vector softmax(const Vector& logits);

}  // namespace hdx
