#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/linalg.hpp"
#include "advlab/nn.hpp"

namespace advlab {

// Twin encoder G: a feedforward net with a linear output layer.
struct SiameseEncoder {
  FeedForwardNet net;

  static SiameseEncoder initialize(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

  std::size_t input_size() const { return net.input_size(); }
  std::size_t output_size() const { return net.output_size(); }
  void validate() const;

  friend bool operator==(const SiameseEncoder&, const SiameseEncoder&) = default;
};

struct ContrastiveConfig {
  double margin = 1.0;
  double learning_rate = 0.01;
  std::size_t epochs = 20;
  std::size_t batch_pairs = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

double pair_distance(const SiameseEncoder& enc, std::span<const double> x1,
                     std::span<const double> x2);

// (1 - y) * D^2 / 2 + y * max(0, m - D)^2 / 2
double contrastive_loss(double d, int y, double margin);

struct ContrastiveGradients {
  GradientBundle params;  // input_grad left empty
  double loss = 0.0;      // batch mean
};

/// Gradient of the batch-mean contrastive loss. Both twins share weights, so
/// their contributions are summed. At D = 0 a dissimilar pair's direction is
/// undefined and contributes zero.
ContrastiveGradients contrastive_gradients(const SiameseEncoder& enc, const DenseMatrix& samples,
                                           std::span<const Pair> pairs, double margin);

struct DrlimTrainResult {
  SiameseEncoder encoder;
  std::vector<double> epoch_loss;
};

DrlimTrainResult train_drlim(SiameseEncoder enc, const LabeledDataset& data, const PairSet& pairs,
                             const ContrastiveConfig& cfg);

DenseMatrix embed(const SiameseEncoder& enc, const DenseMatrix& x);

// Header "x\ty\tclass_label\tis_adversarial", one row per sample of a 2-column embedding.
void write_scatter(std::ostream& out, const DenseMatrix& embedding, std::span<const int> labels,
                   std::span<const std::uint8_t> is_adversarial);

}  // namespace advlab
