#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "advlab/linalg.hpp"

namespace advlab {

using Labels = std::vector<int>;

/// Samples in [0,1] (one row per sample) with integer labels in [0, num_classes).
class LabeledDataset {
 public:
  LabeledDataset() = default;
  // Throws ShapeError on a row/label count mismatch, DomainError on
  // out-of-range pixels or labels.
  LabeledDataset(DenseMatrix samples, Labels labels, int num_classes);

  const DenseMatrix& samples() const noexcept { return samples_; }
  const Labels& labels() const noexcept { return labels_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dims() const noexcept { return samples_.cols(); }
  bool empty() const noexcept { return labels_.empty(); }

  // Per-class member counts, length num_classes.
  std::vector<std::size_t> class_counts() const;

 private:
  DenseMatrix samples_;
  Labels labels_;
  int num_classes_ = 0;
};

// IDX decoding. Images are scaled to [0,1] by /255 and flattened row-major.
// Errors are ParseError carrying the offending byte offset.
DenseMatrix parse_idx_images(std::span<const std::uint8_t> bytes);
Labels parse_idx_labels(std::span<const std::uint8_t> bytes);
DenseMatrix load_idx_images(const std::filesystem::path& path);
Labels load_idx_labels(const std::filesystem::path& path);

// Loads an image/label file pair; mismatched counts throw ShapeError.
LabeledDataset load_idx_dataset(const std::filesystem::path& images,
                                const std::filesystem::path& labels, int num_classes = 10);

std::vector<int> all_classes(const LabeledDataset& d);

/// Draws `per_class` members of each listed class without replacement and
/// relabels them 0..classes.size()-1 in list order. Row order is a seeded
/// shuffle of the selection.
LabeledDataset subset(const LabeledDataset& d, std::span<const int> classes,
                      std::size_t per_class, std::uint64_t seed);

// Restricts to the listed classes (all members), relabeling as subset() does.
LabeledDataset filter_classes(const LabeledDataset& d, std::span<const int> classes);

struct Pair {
  std::size_t first = 0;
  std::size_t second = 0;
  int y = 0;  // 0 = similar (same label), 1 = dissimilar
  friend bool operator==(const Pair&, const Pair&) = default;
};

struct PairSet {
  std::vector<Pair> pairs;
  std::size_t dataset_size = 0;
  friend bool operator==(const PairSet&, const PairSet&) = default;
};

/// ceil(n/2) similar and floor(n/2) dissimilar pairs, emitted in seeded
/// random order. Indices within a pair are distinct; pairs are drawn
/// independently (with replacement across pairs).
PairSet make_pairs(const LabeledDataset& d, std::size_t n_pairs, std::uint64_t seed);

// Throws DomainError if any PairSet invariant fails against `d`.
void validate_pairs(const PairSet& pairs, const LabeledDataset& d);

}  // namespace advlab
