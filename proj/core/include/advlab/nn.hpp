#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/linalg.hpp"

namespace advlab {

enum class Activation { relu, identity };
enum class OutputKind { softmax, linear };

/// Fully connected feedforward network. Layer l maps layer_sizes[l] to
/// layer_sizes[l+1] as Z = A W_l + b_l, with W_l stored in x out. Hidden
/// layers apply `hidden_activation`; the last layer is softmax or linear.
struct FeedForwardNet {
  std::vector<std::size_t> layer_sizes;
  std::vector<DenseMatrix> weights;
  std::vector<Vector> biases;
  Activation hidden_activation = Activation::relu;
  OutputKind output = OutputKind::softmax;

  // Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  static FeedForwardNet initialize(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
                                   OutputKind output = OutputKind::softmax);

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t parameter_count() const;

  // Throws ShapeError if the shapes do not chain, DomainError on non-finite parameters.
  void validate() const;

  friend bool operator==(const FeedForwardNet&, const FeedForwardNet&) = default;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct GradientBundle {
  std::vector<DenseMatrix> weight_grads;
  std::vector<Vector> bias_grads;
  DenseMatrix input_grad;  // n x p; left empty when not requested
};

// Per-layer activations retained for backpropagation; activations[0] is
// the input and activations.back() the network output.
struct ForwardTrace {
  std::vector<DenseMatrix> activations;
  const DenseMatrix& output() const { return activations.back(); }
};

ForwardTrace forward_trace(const FeedForwardNet& net, const DenseMatrix& x);

/// Backpropagates `output_delta`, the gradient of the scalar objective with
/// respect to the last layer's pre-activation, through the trace.
GradientBundle backward(const FeedForwardNet& net, const ForwardTrace& trace,
                        DenseMatrix output_delta, bool want_param_grads = true,
                        bool want_input_grad = true);

/// Class probabilities (softmax output) or raw outputs (linear output), n x K.
DenseMatrix forward(const FeedForwardNet& net, const DenseMatrix& x);

/// Mean of -ln p[true class], with p floored at 1e-12.
double cross_entropy(const DenseMatrix& probs, std::span<const int> labels);

/// Exact gradients of mean cross-entropy with respect to every parameter and the input.
GradientBundle gradients(const FeedForwardNet& net, const DenseMatrix& x,
                         std::span<const int> labels);

// Input gradient only (skips the weight-gradient products).
DenseMatrix input_gradient(const FeedForwardNet& net, const DenseMatrix& x,
                           std::span<const int> labels);

void apply_sgd_step(FeedForwardNet& net, const GradientBundle& grads, double learning_rate);

struct TrainResult {
  FeedForwardNet net;
  std::vector<double> epoch_loss;  // mean training loss observed during each epoch
};

/// Called once per minibatch before the gradient step. `epoch_start` holds the
/// parameters as they were when the epoch began; the callback may append rows
/// to the batch.
using BatchAugmenter = std::function<void(const FeedForwardNet& epoch_start,
                                          DenseMatrix& batch_x, Labels& batch_y)>;

TrainResult train_sgd(FeedForwardNet net, const DenseMatrix& x, std::span<const int> labels,
                      const TrainConfig& cfg, const BatchAugmenter& augment = {});
TrainResult train_sgd(FeedForwardNet net, const LabeledDataset& data, const TrainConfig& cfg);

struct Prediction {
  int predicted = 0;
  double confidence = 0.0;  // max softmax probability
};

struct Evaluation {
  double error_rate = 0.0;
  double mean_confidence = 0.0;
  std::vector<Prediction> per_sample;
};

// Argmax with ties broken toward the lower class index.
std::vector<Prediction> predictions_from_probs(const DenseMatrix& probs);
Evaluation evaluate_probs(const DenseMatrix& probs, std::span<const int> labels);

Evaluation evaluate(const FeedForwardNet& net, const DenseMatrix& x, std::span<const int> labels);
Evaluation evaluate(const FeedForwardNet& net, const LabeledDataset& data);

}  // namespace advlab
