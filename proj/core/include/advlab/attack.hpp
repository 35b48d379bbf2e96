#pragma once

#include <concepts>
#include <cstddef>
#include <span>

#include "advlab/dataset.hpp"
#include "advlab/error.hpp"
#include "advlab/linalg.hpp"
#include "advlab/nn.hpp"

namespace advlab {

struct AttackConfig {
  double phi = 0.25;
  double clip_min = 0.0;
  double clip_max = 1.0;

  void validate() const;
};

/// phi * sign(dL/dX) with sign(0) = 0. Needs gradient access, so only a raw
/// FeedForwardNet is accepted; defended pipelines have no overload here.
DenseMatrix fgsm_perturbation(const FeedForwardNet& net, const DenseMatrix& x,
                              std::span<const int> labels, const AttackConfig& cfg);

// clip(X + fgsm_perturbation(...), clip_min, clip_max).
DenseMatrix craft_adversarial(const FeedForwardNet& net, const DenseMatrix& x,
                              std::span<const int> labels, const AttackConfig& cfg);
LabeledDataset craft_adversarial(const FeedForwardNet& net, const LabeledDataset& data,
                                 const AttackConfig& cfg);

/// Trains `init` on the union of each minibatch and adversarial counterparts
/// of its first floor(mix_ratio * batch) rows. Counterparts are crafted from
/// the parameters held at the start of the current epoch.
TrainResult adversarial_training(FeedForwardNet init, const LabeledDataset& data,
                                 const TrainConfig& train_cfg, const AttackConfig& attack_cfg,
                                 double mix_ratio = 0.5);

inline DenseMatrix class_probabilities(const FeedForwardNet& net, const DenseMatrix& x) {
  return forward(net, x);
}
inline std::size_t input_dimension(const FeedForwardNet& net) { return net.input_size(); }

// Anything that maps raw inputs to class probabilities. No gradient access is implied.
template <typename T>
concept InferenceTarget = requires(const T& t, const DenseMatrix& x) {
  { class_probabilities(t, x) } -> std::same_as<DenseMatrix>;
  { input_dimension(t) } -> std::convertible_to<std::size_t>;
};

// Targets that expose input gradients and can be attacked white-box.
template <typename T>
concept WhiteBoxTarget = requires(const T& t, const DenseMatrix& x, std::span<const int> y,
                                  const AttackConfig& cfg) {
  { fgsm_perturbation(t, x, y, cfg) } -> std::same_as<DenseMatrix>;
};

/// Crafts FGSM samples on `source` and returns `target`'s error rate on them.
template <InferenceTarget Target>
double cross_model_eval(const FeedForwardNet& source, const Target& target,
                        const LabeledDataset& data, const AttackConfig& cfg) {
  if (input_dimension(target) != source.input_size()) {
    throw ShapeError("cross_model_eval: source and target input dimensions differ");
  }
  const DenseMatrix adv = craft_adversarial(source, data.samples(), data.labels(), cfg);
  return evaluate_probs(class_probabilities(target, adv), data.labels()).error_rate;
}

}  // namespace advlab
