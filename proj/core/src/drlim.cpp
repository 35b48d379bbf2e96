#include "advlab/drlim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <string>

#include "advlab/error.hpp"
#include "advlab/random.hpp"

namespace advlab {

SiameseEncoder SiameseEncoder::initialize(std::vector<std::size_t> layer_sizes,
                                          std::uint64_t seed) {
  return {FeedForwardNet::initialize(std::move(layer_sizes), seed, OutputKind::linear)};
}

void SiameseEncoder::validate() const {
  net.validate();
  if (net.output != OutputKind::linear) throw DomainError("SiameseEncoder: output must be linear");
}

void ContrastiveConfig::validate() const {
  if (!(margin > 0.0) || !std::isfinite(margin)) {
    throw DomainError("ContrastiveConfig: margin must be positive");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw DomainError("ContrastiveConfig: learning_rate must be positive");
  }
  if (batch_pairs == 0) throw DomainError("ContrastiveConfig: batch_pairs must be >= 1");
}

double pair_distance(const SiameseEncoder& enc, std::span<const double> x1,
                     std::span<const double> x2) {
  if (x1.size() != enc.input_size() || x2.size() != enc.input_size()) {
    throw ShapeError("pair_distance: input length differs from encoder input size");
  }
  DenseMatrix both(2, enc.input_size());
  std::copy(x1.begin(), x1.end(), both.row(0).begin());
  std::copy(x2.begin(), x2.end(), both.row(1).begin());
  const DenseMatrix g = forward(enc.net, both);
  double s = 0.0;
  for (std::size_t k = 0; k < g.cols(); ++k) s += (g(0, k) - g(1, k)) * (g(0, k) - g(1, k));
  return std::sqrt(s);
}

double contrastive_loss(double d, int y, double margin) {
  if (!(d >= 0.0)) throw DomainError("contrastive_loss: distance must be >= 0");
  if (y != 0 && y != 1) throw DomainError("contrastive_loss: y must be 0 or 1");
  if (y == 0) return 0.5 * d * d;
  const double gap = std::max(0.0, margin - d);
  return 0.5 * gap * gap;
}

ContrastiveGradients contrastive_gradients(const SiameseEncoder& enc, const DenseMatrix& samples,
                                           std::span<const Pair> pairs, double margin) {
  if (pairs.empty()) throw EmptyInputError("contrastive_gradients: no pairs");
  std::vector<std::size_t> first, second;
  first.reserve(pairs.size());
  second.reserve(pairs.size());
  for (const Pair& p : pairs) {
    if (p.first >= samples.rows() || p.second >= samples.rows()) {
      throw ShapeError("contrastive_gradients: pair index out of range");
    }
    first.push_back(p.first);
    second.push_back(p.second);
  }
  const ForwardTrace t1 = forward_trace(enc.net, gather_rows(samples, first));
  const ForwardTrace t2 = forward_trace(enc.net, gather_rows(samples, second));
  const DenseMatrix& g1 = t1.output();
  const DenseMatrix& g2 = t2.output();

  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  DenseMatrix d1(g1.rows(), g1.cols());
  DenseMatrix d2(g1.rows(), g1.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto a = g1.row(i);
    auto b = g2.row(i);
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    const double d = std::sqrt(s);
    loss += contrastive_loss(d, pairs[i].y, margin);
    // dL/dG1 = coef * (G1 - G2); dL/dG2 is its negation.
    double coef = 0.0;
    if (pairs[i].y == 0) {
      coef = 1.0;
    } else if (d < margin && d > 0.0) {
      coef = -(margin - d) / d;
    }
    coef *= inv_n;
    auto r1 = d1.row(i);
    auto r2 = d2.row(i);
    for (std::size_t k = 0; k < a.size(); ++k) {
      r1[k] = coef * (a[k] - b[k]);
      r2[k] = -r1[k];
    }
  }
  ContrastiveGradients out;
  out.loss = loss * inv_n;
  out.params = backward(enc.net, t1, std::move(d1), true, false);
  const GradientBundle other = backward(enc.net, t2, std::move(d2), true, false);
  for (std::size_t l = 0; l < enc.net.num_layers(); ++l) {
    auto w = out.params.weight_grads[l].data();
    auto w2 = other.weight_grads[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += w2[i];
    auto& b = out.params.bias_grads[l];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += other.bias_grads[l][i];
  }
  return out;
}

DrlimTrainResult train_drlim(SiameseEncoder enc, const LabeledDataset& data, const PairSet& pairs,
                             const ContrastiveConfig& cfg) {
  cfg.validate();
  enc.validate();
  validate_pairs(pairs, data);
  if (data.dims() != enc.input_size()) throw ShapeError("train_drlim: input dimension mismatch");
  if (pairs.pairs.empty()) throw EmptyInputError("train_drlim: no pairs");

  std::vector<Pair> order = pairs.pairs;
  Rng rng(cfg.seed);
  DrlimTrainResult result{std::move(enc), {}};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_pairs) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_pairs);
      const std::span<const Pair> batch(order.data() + start, stop - start);
      const ContrastiveGradients g =
          contrastive_gradients(result.encoder, data.samples(), batch, cfg.margin);
      if (!std::isfinite(g.loss)) {
        throw DivergenceError("train_drlim: non-finite loss in epoch " + std::to_string(epoch),
                              epoch);
      }
      apply_sgd_step(result.encoder.net, g.params, cfg.learning_rate);
      loss_sum += g.loss * static_cast<double>(batch.size());
    }
    for (const auto& w : result.encoder.net.weights) {
      if (!w.all_finite()) {
        throw DivergenceError("train_drlim: parameters became non-finite in epoch " +
                                  std::to_string(epoch),
                              epoch);
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return result;
}

DenseMatrix embed(const SiameseEncoder& enc, const DenseMatrix& x) { return forward(enc.net, x); }

void write_scatter(std::ostream& out, const DenseMatrix& embedding, std::span<const int> labels,
                   std::span<const std::uint8_t> is_adversarial) {
  if (embedding.cols() != 2) throw ShapeError("write_scatter: embedding must have 2 columns");
  if (labels.size() != embedding.rows() || is_adversarial.size() != embedding.rows()) {
    throw ShapeError("write_scatter: row, label and flag counts differ");
  }
  out << "x\ty\tclass_label\tis_adversarial\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < embedding.rows(); ++i) {
    out << embedding(i, 0) << '\t' << embedding(i, 1) << '\t' << labels[i] << '\t'
        << (is_adversarial[i] != 0 ? 1 : 0) << '\n';
  }
}

}  // namespace advlab
