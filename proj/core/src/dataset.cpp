#include "advlab/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "advlab/error.hpp"
#include "advlab/random.hpp"

namespace advlab {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const char* field) {
  if (offset + 4 > bytes.size()) {
    throw ParseError(std::string("IDX stream truncated while reading ") + field, offset);
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<std::size_t>> members_by_class(const LabeledDataset& d) {
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(d.num_classes()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    members[static_cast<std::size_t>(d.labels()[i])].push_back(i);
  }
  return members;
}

std::vector<int> relabel_table(const LabeledDataset& d, std::span<const int> classes) {
  if (classes.empty()) throw DomainError("class list is empty");
  std::vector<int> table(static_cast<std::size_t>(d.num_classes()), -1);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const int c = classes[k];
    if (c < 0 || c >= d.num_classes()) {
      throw DomainError("class " + std::to_string(c) + " outside [0, " +
                        std::to_string(d.num_classes()) + ")");
    }
    if (table[static_cast<std::size_t>(c)] != -1) {
      throw DomainError("class " + std::to_string(c) + " listed twice");
    }
    table[static_cast<std::size_t>(c)] = static_cast<int>(k);
  }
  return table;
}

LabeledDataset take(const LabeledDataset& d, const std::vector<std::size_t>& rows,
                    const std::vector<int>& table, int num_classes) {
  Labels labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) labels.push_back(table[static_cast<std::size_t>(d.labels()[r])]);
  return LabeledDataset(gather_rows(d.samples(), rows), std::move(labels), num_classes);
}

}  // namespace

LabeledDataset::LabeledDataset(DenseMatrix samples, Labels labels, int num_classes)
    : samples_(std::move(samples)), labels_(std::move(labels)), num_classes_(num_classes) {
  if (num_classes_ <= 0) throw DomainError("LabeledDataset: num_classes must be positive");
  if (samples_.rows() != labels_.size()) {
    throw ShapeError("LabeledDataset: " + std::to_string(samples_.rows()) + " samples but " +
                     std::to_string(labels_.size()) + " labels");
  }
  for (double v : samples_.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("LabeledDataset: pixel outside [0,1]");
  }
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) {
      throw DomainError("LabeledDataset: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes_) + ")");
    }
  }
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

DenseMatrix parse_idx_images(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0, "magic number");
  if (magic != kImageMagic) {
    throw ParseError("IDX images: bad magic number " + std::to_string(magic) +
                         " (expected 0x00000803)",
                     0);
  }
  const std::uint64_t count = read_be32(bytes, 4, "image count");
  const std::uint64_t rows = read_be32(bytes, 8, "row count");
  const std::uint64_t cols = read_be32(bytes, 12, "column count");
  if (count == 0 || rows == 0 || cols == 0) throw ParseError("IDX images: zero dimension", 4);
  const std::uint64_t pixels = rows * cols;
  if (pixels > std::numeric_limits<std::uint32_t>::max() ||
      count > std::numeric_limits<std::uint64_t>::max() / pixels) {
    throw ParseError("IDX images: dimension overflow", 4);
  }
  const std::uint64_t payload = count * pixels;
  constexpr std::size_t kHeader = 16;
  if (bytes.size() - kHeader < payload) {
    throw ParseError("IDX images: truncated payload, expected " + std::to_string(payload) +
                         " bytes",
                     bytes.size());
  }
  std::vector<double> data(static_cast<std::size_t>(payload));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = bytes[kHeader + i] / 255.0;
  return DenseMatrix(static_cast<std::size_t>(count), static_cast<std::size_t>(pixels),
                     std::move(data));
}

Labels parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0, "magic number");
  if (magic != kLabelMagic) {
    throw ParseError("IDX labels: bad magic number " + std::to_string(magic) +
                         " (expected 0x00000801)",
                     0);
  }
  const std::size_t count = read_be32(bytes, 4, "label count");
  constexpr std::size_t kHeader = 8;
  if (bytes.size() - kHeader < count) {
    throw ParseError("IDX labels: truncated payload, expected " + std::to_string(count) +
                         " bytes",
                     bytes.size());
  }
  Labels labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = bytes[kHeader + i];
  return labels;
}

DenseMatrix load_idx_images(const std::filesystem::path& path) {
  return parse_idx_images(read_file(path));
}

Labels load_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(read_file(path));
}

LabeledDataset load_idx_dataset(const std::filesystem::path& images,
                                const std::filesystem::path& labels, int num_classes) {
  return LabeledDataset(load_idx_images(images), load_idx_labels(labels), num_classes);
}

std::vector<int> all_classes(const LabeledDataset& d) {
  std::vector<int> classes(static_cast<std::size_t>(d.num_classes()));
  for (int c = 0; c < d.num_classes(); ++c) classes[static_cast<std::size_t>(c)] = c;
  return classes;
}

LabeledDataset subset(const LabeledDataset& d, std::span<const int> classes,
                      std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) throw DomainError("subset: per_class must be positive");
  const auto table = relabel_table(d, classes);
  auto members = members_by_class(d);
  Rng rng(seed);
  std::vector<std::size_t> rows;
  rows.reserve(per_class * classes.size());
  for (int c : classes) {
    auto& pool = members[static_cast<std::size_t>(c)];
    if (pool.size() < per_class) {
      throw CapacityError("subset: class " + std::to_string(c) + " has " +
                          std::to_string(pool.size()) + " members, " +
                          std::to_string(per_class) + " requested");
    }
    rng.shuffle(pool);
    rows.insert(rows.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  rng.shuffle(rows);
  return take(d, rows, table, static_cast<int>(classes.size()));
}

LabeledDataset filter_classes(const LabeledDataset& d, std::span<const int> classes) {
  const auto table = relabel_table(d, classes);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (table[static_cast<std::size_t>(d.labels()[i])] >= 0) rows.push_back(i);
  }
  if (rows.empty()) throw EmptyInputError("filter_classes: no samples in the listed classes");
  return take(d, rows, table, static_cast<int>(classes.size()));
}

PairSet make_pairs(const LabeledDataset& d, std::size_t n_pairs, std::uint64_t seed) {
  const auto members = members_by_class(d);
  std::size_t present = 0;
  for (const auto& m : members) {
    if (m.empty()) continue;
    ++present;
    if (m.size() < 2) {
      throw CompositionError("make_pairs: a present class has a single member");
    }
  }
  if (present < 2) {
    throw CompositionError("make_pairs: need at least two classes for dissimilar pairs");
  }

  Rng rng(seed);
  PairSet out;
  out.dataset_size = d.size();
  out.pairs.reserve(n_pairs);
  const std::size_t similar = (n_pairs + 1) / 2;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const std::size_t i = rng.index(d.size());
    const auto& own = members[static_cast<std::size_t>(d.labels()[i])];
    if (k < similar) {
      std::size_t j = i;
      while (j == i) j = own[rng.index(own.size())];
      out.pairs.push_back({i, j, 0});
    } else {
      // Rejection keeps the partner uniform over the other classes' members.
      std::size_t j = i;
      while (d.labels()[j] == d.labels()[i]) j = rng.index(d.size());
      out.pairs.push_back({i, j, 1});
    }
  }
  rng.shuffle(out.pairs);
  return out;
}

void validate_pairs(const PairSet& pairs, const LabeledDataset& d) {
  if (pairs.dataset_size != d.size()) throw DomainError("PairSet: dataset size mismatch");
  for (const Pair& p : pairs.pairs) {
    if (p.first >= d.size() || p.second >= d.size()) {
      throw DomainError("PairSet: index out of range");
    }
    if (p.first == p.second) throw DomainError("PairSet: pair references one sample twice");
    if (p.y != 0 && p.y != 1) throw DomainError("PairSet: y must be 0 or 1");
    const bool same = d.labels()[p.first] == d.labels()[p.second];
    if (same != (p.y == 0)) throw DomainError("PairSet: y disagrees with the labels");
  }
}

}  // namespace advlab
