#include "advlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace advlab {

void AttackConfig::validate() const {
  if (!(phi >= 0.0) || !std::isfinite(phi)) throw DomainError("AttackConfig: phi must be >= 0");
  if (!(clip_min < clip_max)) throw DomainError("AttackConfig: clip_min must be < clip_max");
}

DenseMatrix fgsm_perturbation(const FeedForwardNet& net, const DenseMatrix& x,
                              std::span<const int> labels, const AttackConfig& cfg) {
  cfg.validate();
  DenseMatrix delta = input_gradient(net, x, labels);
  for (double& g : delta.data()) {
    g = g > 0.0 ? cfg.phi : (g < 0.0 ? -cfg.phi : 0.0);
  }
  return delta;
}

DenseMatrix craft_adversarial(const FeedForwardNet& net, const DenseMatrix& x,
                              std::span<const int> labels, const AttackConfig& cfg) {
  DenseMatrix adv = fgsm_perturbation(net, x, labels, cfg);
  auto a = adv.data();
  auto src = x.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = std::clamp(src[i] + a[i], cfg.clip_min, cfg.clip_max);
  }
  return adv;
}

LabeledDataset craft_adversarial(const FeedForwardNet& net, const LabeledDataset& data,
                                 const AttackConfig& cfg) {
  if (data.empty()) throw EmptyInputError("craft_adversarial: empty dataset");
  return LabeledDataset(craft_adversarial(net, data.samples(), data.labels(), cfg), data.labels(),
                        data.num_classes());
}

TrainResult adversarial_training(FeedForwardNet init, const LabeledDataset& data,
                                 const TrainConfig& train_cfg, const AttackConfig& attack_cfg,
                                 double mix_ratio) {
  if (!(mix_ratio > 0.0 && mix_ratio <= 1.0)) {
    throw DomainError("adversarial_training: mix_ratio must lie in (0, 1]");
  }
  attack_cfg.validate();
  auto augment = [&](const FeedForwardNet& epoch_start, DenseMatrix& bx, Labels& by) {
    const auto k = static_cast<std::size_t>(std::floor(mix_ratio * static_cast<double>(by.size())));
    if (k == 0) return;
    std::vector<std::size_t> head(k);
    std::iota(head.begin(), head.end(), std::size_t{0});
    const DenseMatrix src = gather_rows(bx, head);
    const Labels src_labels(by.begin(), by.begin() + static_cast<std::ptrdiff_t>(k));
    const DenseMatrix adv = craft_adversarial(epoch_start, src, src_labels, attack_cfg);
    by.insert(by.end(), src_labels.begin(), src_labels.end());
    bx = vstack(bx, adv);
  };
  return train_sgd(std::move(init), data.samples(), data.labels(), train_cfg, augment);
}

}  // namespace advlab
