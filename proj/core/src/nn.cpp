#include "advlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "advlab/error.hpp"
#include "advlab/random.hpp"

namespace advlab {
namespace {

constexpr double kProbFloor = 1e-12;

void require_input_shape(const FeedForwardNet& net, const DenseMatrix& x, const char* op) {
  if (x.cols() != net.input_size()) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.cols()) +
                     " columns, network expects " + std::to_string(net.input_size()));
  }
}

void require_labels(const DenseMatrix& rows, std::span<const int> labels, std::size_t classes,
                    const char* op) {
  if (rows.rows() != labels.size()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(rows.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ShapeError(std::string(op) + ": label " + std::to_string(y) + " out of range");
    }
  }
}

void softmax_rows(DenseMatrix& z) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

// (probs - onehot) / n: gradient of mean cross-entropy w.r.t. the logits.
DenseMatrix softmax_ce_delta(const DenseMatrix& probs, std::span<const int> labels) {
  DenseMatrix delta = probs;
  const double inv_n = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t r = 0; r < delta.rows(); ++r) {
    auto row = delta.row(r);
    row[static_cast<std::size_t>(labels[r])] -= 1.0;
    for (double& v : row) v *= inv_n;
  }
  return delta;
}

}  // namespace

FeedForwardNet FeedForwardNet::initialize(std::vector<std::size_t> layer_sizes,
                                          std::uint64_t seed, OutputKind output) {
  if (layer_sizes.size() < 2) throw ShapeError("FeedForwardNet: need at least input and output sizes");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ShapeError("FeedForwardNet: layer sizes must be positive");
  }
  FeedForwardNet net;
  net.layer_sizes = std::move(layer_sizes);
  net.output = output;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    const std::size_t fan_in = net.layer_sizes[l];
    const std::size_t fan_out = net.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseMatrix w(fan_in, fan_out);
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

std::size_t FeedForwardNet::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) count += weights[l].size() + biases[l].size();
  return count;
}

void FeedForwardNet::validate() const {
  if (layer_sizes.size() < 2) throw ShapeError("FeedForwardNet: need at least two layer sizes");
  if (weights.size() + 1 != layer_sizes.size() || biases.size() != weights.size()) {
    throw ShapeError("FeedForwardNet: layer count does not match layer_sizes");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_sizes[l] || weights[l].cols() != layer_sizes[l + 1] ||
        biases[l].size() != layer_sizes[l + 1]) {
      throw ShapeError("FeedForwardNet: layer " + std::to_string(l) +
                       " shape does not chain with layer_sizes");
    }
    require_finite(weights[l], "FeedForwardNet weights");
    for (double b : biases[l]) {
      if (!std::isfinite(b)) throw DomainError("FeedForwardNet biases: non-finite entry");
    }
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw DomainError("TrainConfig: learning_rate must be positive");
  }
  if (batch_size == 0) throw DomainError("TrainConfig: batch_size must be >= 1");
}

ForwardTrace forward_trace(const FeedForwardNet& net, const DenseMatrix& x) {
  require_input_shape(net, x, "forward");
  ForwardTrace trace;
  trace.activations.reserve(net.num_layers() + 1);
  trace.activations.push_back(x);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    DenseMatrix z = matmul(trace.activations.back(), net.weights[l]);
    add_row_vector(z, net.biases[l]);
    const bool last = l + 1 == net.num_layers();
    if (!last) {
      if (net.hidden_activation == Activation::relu) {
        for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
      }
    } else if (net.output == OutputKind::softmax) {
      softmax_rows(z);
    }
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

GradientBundle backward(const FeedForwardNet& net, const ForwardTrace& trace,
                        DenseMatrix output_delta, bool want_param_grads, bool want_input_grad) {
  if (output_delta.rows() != trace.output().rows() ||
      output_delta.cols() != trace.output().cols()) {
    throw ShapeError("backward: output delta shape differs from the network output");
  }
  GradientBundle grads;
  if (want_param_grads) {
    grads.weight_grads.resize(net.num_layers());
    grads.bias_grads.resize(net.num_layers());
  }
  DenseMatrix delta = std::move(output_delta);
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    const DenseMatrix& input = trace.activations[l];
    if (want_param_grads) {
      grads.weight_grads[l] = matmul_tn(input, delta);
      Vector db(delta.cols(), 0.0);
      for (std::size_t r = 0; r < delta.rows(); ++r) {
        auto row = delta.row(r);
        for (std::size_t c = 0; c < delta.cols(); ++c) db[c] += row[c];
      }
      grads.bias_grads[l] = std::move(db);
    }
    if (l == 0 && !want_input_grad) break;
    DenseMatrix upstream = matmul_nt(delta, net.weights[l]);
    if (l == 0) {
      grads.input_grad = std::move(upstream);
      break;
    }
    if (net.hidden_activation == Activation::relu) {
      // Subgradient of the rectifier at 0 is taken as 0.
      auto a = input.data();
      auto u = upstream.data();
      for (std::size_t i = 0; i < u.size(); ++i) {
        if (!(a[i] > 0.0)) u[i] = 0.0;
      }
    }
    delta = std::move(upstream);
  }
  return grads;
}

DenseMatrix forward(const FeedForwardNet& net, const DenseMatrix& x) {
  return std::move(forward_trace(net, x).activations.back());
}

double cross_entropy(const DenseMatrix& probs, std::span<const int> labels) {
  require_labels(probs, labels, probs.cols(), "cross_entropy");
  if (probs.rows() == 0) throw EmptyInputError("cross_entropy: no rows");
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const double p = probs(r, static_cast<std::size_t>(labels[r]));
    total -= std::log(std::max(p, kProbFloor));
  }
  return total / static_cast<double>(probs.rows());
}

GradientBundle gradients(const FeedForwardNet& net, const DenseMatrix& x,
                         std::span<const int> labels) {
  if (net.output != OutputKind::softmax) {
    throw DomainError("gradients: cross-entropy needs a softmax output layer");
  }
  const ForwardTrace trace = forward_trace(net, x);
  require_labels(x, labels, net.output_size(), "gradients");
  return backward(net, trace, softmax_ce_delta(trace.output(), labels), true, true);
}

DenseMatrix input_gradient(const FeedForwardNet& net, const DenseMatrix& x,
                           std::span<const int> labels) {
  if (net.output != OutputKind::softmax) {
    throw DomainError("input_gradient: cross-entropy needs a softmax output layer");
  }
  const ForwardTrace trace = forward_trace(net, x);
  require_labels(x, labels, net.output_size(), "input_gradient");
  return backward(net, trace, softmax_ce_delta(trace.output(), labels), false, true).input_grad;
}

void apply_sgd_step(FeedForwardNet& net, const GradientBundle& grads, double learning_rate) {
  if (grads.weight_grads.size() != net.num_layers()) {
    throw ShapeError("apply_sgd_step: gradient bundle has no parameter gradients");
  }
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto w = net.weights[l].data();
    auto g = grads.weight_grads[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
    auto& b = net.biases[l];
    const auto& gb = grads.bias_grads[l];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= learning_rate * gb[i];
  }
}

TrainResult train_sgd(FeedForwardNet net, const DenseMatrix& x, std::span<const int> labels,
                      const TrainConfig& cfg, const BatchAugmenter& augment) {
  cfg.validate();
  net.validate();
  if (net.output != OutputKind::softmax) {
    throw DomainError("train_sgd: classifier training needs a softmax output layer");
  }
  if (labels.empty()) throw EmptyInputError("train_sgd: empty training set");
  require_input_shape(net, x, "train_sgd");
  require_labels(x, labels, net.output_size(), "train_sgd");

  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);

  TrainResult result{std::move(net), {}};
  FeedForwardNet& model = result.net;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    FeedForwardNet epoch_start;
    if (augment) epoch_start = model;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      DenseMatrix bx = gather_rows(x, rows);
      Labels by;
      by.reserve(rows.size());
      for (std::size_t r : rows) by.push_back(labels[r]);
      if (augment) augment(epoch_start, bx, by);

      const ForwardTrace trace = forward_trace(model, bx);
      const double loss = cross_entropy(trace.output(), by);
      if (!std::isfinite(loss)) {
        throw DivergenceError("train_sgd: non-finite loss in epoch " + std::to_string(epoch),
                              epoch);
      }
      const GradientBundle grads =
          backward(model, trace, softmax_ce_delta(trace.output(), by), true, false);
      apply_sgd_step(model, grads, cfg.learning_rate);
      loss_sum += loss * static_cast<double>(by.size());
      seen += by.size();
    }
    for (const auto& w : model.weights) {
      if (!w.all_finite()) {
        throw DivergenceError("train_sgd: parameters became non-finite in epoch " +
                                  std::to_string(epoch),
                              epoch);
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  return result;
}

TrainResult train_sgd(FeedForwardNet net, const LabeledDataset& data, const TrainConfig& cfg) {
  return train_sgd(std::move(net), data.samples(), data.labels(), cfg);
}

std::vector<Prediction> predictions_from_probs(const DenseMatrix& probs) {
  std::vector<Prediction> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = {static_cast<int>(best), row[best]};
  }
  return out;
}

Evaluation evaluate_probs(const DenseMatrix& probs, std::span<const int> labels) {
  if (labels.empty()) throw EmptyInputError("evaluate: empty dataset");
  require_labels(probs, labels, probs.cols(), "evaluate");
  Evaluation ev;
  ev.per_sample = predictions_from_probs(probs);
  std::size_t wrong = 0;
  double conf = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (ev.per_sample[i].predicted != labels[i]) ++wrong;
    conf += ev.per_sample[i].confidence;
  }
  ev.error_rate = static_cast<double>(wrong) / static_cast<double>(labels.size());
  ev.mean_confidence = conf / static_cast<double>(labels.size());
  return ev;
}

Evaluation evaluate(const FeedForwardNet& net, const DenseMatrix& x, std::span<const int> labels) {
  if (labels.empty()) throw EmptyInputError("evaluate: empty dataset");
  return evaluate_probs(forward(net, x), labels);
}

Evaluation evaluate(const FeedForwardNet& net, const LabeledDataset& data) {
  return evaluate(net, data.samples(), data.labels());
}

}  // namespace advlab
