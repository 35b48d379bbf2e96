#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "advlab/dataset.hpp"
#include "advlab/error.hpp"

using namespace advlab;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> concat(std::initializer_list<std::vector<std::uint8_t>> parts) {
  std::vector<std::uint8_t> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

LabeledDataset toy(std::vector<int> labels, int classes) {
  DenseMatrix x(labels.size(), 2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    x(i, 0) = static_cast<double>(i) / static_cast<double>(labels.size());
    x(i, 1) = static_cast<double>(labels[i]) / static_cast<double>(classes);
  }
  return LabeledDataset(std::move(x), std::move(labels), classes);
}

}  // namespace

TEST(Idx, ParsesHandEncodedImages) {
  const auto bytes = concat({be32(0x803), be32(2), be32(2), be32(2), {0, 255, 128, 0, 255, 0, 0, 128}});
  const auto m = parse_idx_images(bytes);
  ASSERT_EQ(m.rows(), 2u);
  ASSERT_EQ(m.cols(), 4u);
  const std::vector<double> expected{0, 1, 128 / 255.0, 0, 1, 0, 0, 128 / 255.0};
  EXPECT_EQ(m.values(), expected);
}

TEST(Idx, ParsesHandEncodedLabels) {
  const auto bytes = concat({be32(0x801), be32(3), {7, 0, 9}});
  EXPECT_EQ(parse_idx_labels(bytes), (Labels{7, 0, 9}));
}

TEST(Idx, BadMagicNamesOffsetZero) {
  const auto bytes = concat({be32(0x801), be32(1), be32(1), be32(1), {0}});
  try {
    parse_idx_images(bytes);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.byte_offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
  EXPECT_THROW(parse_idx_labels(concat({be32(0x803), be32(1), {0}})), ParseError);
}

TEST(Idx, TruncatedStreams) {
  EXPECT_THROW(parse_idx_images(concat({be32(0x803), be32(2)})), ParseError);
  EXPECT_THROW(parse_idx_images(concat({be32(0x803), be32(2), be32(2), be32(2), {1, 2, 3}})),
               ParseError);
  EXPECT_THROW(parse_idx_labels(concat({be32(0x801), be32(5), {1, 2}})), ParseError);
  EXPECT_THROW(parse_idx_labels({}), ParseError);
}

TEST(Idx, DimensionOverflow) {
  const auto bytes = concat({be32(0x803), be32(0xFFFFFFFF), be32(0xFFFFFFFF), be32(0xFFFFFFFF)});
  EXPECT_THROW(parse_idx_images(bytes), ParseError);
}

TEST(LabeledDatasetTest, CountMismatchRejected) {
  EXPECT_THROW(LabeledDataset(DenseMatrix(3, 2), Labels{0, 1}, 2), ShapeError);
  EXPECT_THROW(LabeledDataset(DenseMatrix(2, 2, 2.0), Labels{0, 1}, 2), DomainError);
  EXPECT_THROW(LabeledDataset(DenseMatrix(2, 2), Labels{0, 2}, 2), DomainError);
}

TEST(Subset, ToyExample) {
  const auto d = toy({4, 9, 4, 1, 9, 4, 9, 2}, 10);
  const std::vector<int> classes{4, 9};
  const auto s = subset(d, classes, 2, 17);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s.num_classes(), 2);
  EXPECT_EQ(s.class_counts(), (std::vector<std::size_t>{2, 2}));
  for (std::size_t i = 0; i < s.size(); ++i) {
    // Second feature encodes the original label.
    const int original = static_cast<int>(std::lround(s.samples()(i, 1) * 10));
    EXPECT_EQ(original, classes[static_cast<std::size_t>(s.labels()[i])]);
  }
}

TEST(Subset, FullSelectionIsPermutation) {
  const auto d = toy({0, 1, 2, 0, 1, 2, 0, 1, 2}, 3);
  const auto s = subset(d, all_classes(d), 3, 5);
  std::multiset<std::pair<std::vector<double>, int>> a, b;
  for (std::size_t i = 0; i < d.size(); ++i) {
    a.insert({{d.samples().row(i).begin(), d.samples().row(i).end()}, d.labels()[i]});
    b.insert({{s.samples().row(i).begin(), s.samples().row(i).end()}, s.labels()[i]});
  }
  EXPECT_EQ(a, b);
}

TEST(Subset, DeterministicAndCapacityChecked) {
  const auto d = toy({0, 1, 0, 1, 0, 1}, 2);
  const std::vector<int> classes{0, 1};
  EXPECT_EQ(subset(d, classes, 2, 3).samples(), subset(d, classes, 2, 3).samples());
  try {
    subset(d, classes, 4, 3);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("class 0"), std::string::npos);
  }
}

TEST(MakePairs, ForcedComposition) {
  const auto d = toy({0, 0, 1, 1}, 2);
  const auto p = make_pairs(d, 2, 1);
  ASSERT_EQ(p.pairs.size(), 2u);
  int similar = 0;
  for (const auto& pr : p.pairs) similar += pr.y == 0;
  EXPECT_EQ(similar, 1);
  validate_pairs(p, d);
}

TEST(MakePairs, Deterministic) {
  const auto d = toy({0, 0, 1, 1, 2, 2}, 3);
  EXPECT_EQ(make_pairs(d, 50, 9), make_pairs(d, 50, 9));
}

TEST(MakePairs, BalancedAndConsistent) {
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i % 5);
  const auto d = toy(labels, 5);
  const auto p = make_pairs(d, 1000, 4);
  ASSERT_EQ(p.pairs.size(), 1000u);
  int similar = 0;
  for (const auto& pr : p.pairs) {
    EXPECT_NE(pr.first, pr.second);
    EXPECT_LT(pr.first, d.size());
    EXPECT_LT(pr.second, d.size());
    const bool same = d.labels()[pr.first] == d.labels()[pr.second];
    EXPECT_EQ(same, pr.y == 0);
    similar += pr.y == 0;
  }
  EXPECT_EQ(similar, 500);
  EXPECT_EQ(make_pairs(d, 7, 4).pairs.size(), 7u);
  int odd_similar = 0;
  for (const auto& pr : make_pairs(d, 7, 4).pairs) odd_similar += pr.y == 0;
  EXPECT_EQ(odd_similar, 4);
}

TEST(MakePairs, CompositionErrors) {
  EXPECT_THROW(make_pairs(toy({1, 1, 1}, 2), 4, 0), CompositionError);
  EXPECT_THROW(make_pairs(toy({0, 0, 1}, 2), 4, 0), CompositionError);
}

TEST(ValidatePairs, DetectsViolations) {
  const auto d = toy({0, 0, 1, 1}, 2);
  EXPECT_THROW(validate_pairs(PairSet{{{0, 0, 0}}, 4}, d), DomainError);
  EXPECT_THROW(validate_pairs(PairSet{{{0, 2, 0}}, 4}, d), DomainError);
  EXPECT_THROW(validate_pairs(PairSet{{{0, 9, 1}}, 4}, d), DomainError);
  EXPECT_THROW(validate_pairs(PairSet{{{0, 1, 0}}, 5}, d), DomainError);
}

TEST(FilterClasses, KeepsListedClasses) {
  const auto d = toy({0, 1, 2, 1, 0}, 3);
  const std::vector<int> classes{1, 0};
  const auto f = filter_classes(d, classes);
  EXPECT_EQ(f.size(), 4u);
  EXPECT_EQ(f.class_counts(), (std::vector<std::size_t>{2, 2}));
}
