#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/dataset.hpp"
#include "advlab/drlim.hpp"
#include "advlab/nn.hpp"
#include "advlab/transform.hpp"

namespace advlab {

struct NoTransform {
  friend bool operator==(const NoTransform&, const NoTransform&) = default;
};

// Preprocessing stage placed in front of a classifier. None of the
// alternatives exposes a gradient with respect to its input.
using TransformModel = std::variant<NoTransform, PcaModel, DlmModel, SiameseEncoder>;

std::string_view transform_kind(const TransformModel& t);  // "none", "pca", "dlm", "drlim"
// Output width; 0 for NoTransform, which passes inputs through.
std::size_t transform_output_size(const TransformModel& t);
// `noise_seed` is only consumed by DLM.
DenseMatrix apply_transform(const TransformModel& t, const DenseMatrix& x, std::uint64_t noise_seed);

struct DefendedClassifier {
  TransformModel transform;
  FeedForwardNet classifier;
  std::uint64_t train_noise_seed = 0;
  std::uint64_t eval_noise_seed = 0;

  std::size_t input_size() const;
  // Throws ShapeError when the transform output does not feed the classifier.
  void validate() const;

  friend bool operator==(const DefendedClassifier&, const DefendedClassifier&) = default;
};

// Transform with the recorded evaluation noise seed, then classify.
DenseMatrix class_probabilities(const DefendedClassifier& dc, const DenseMatrix& x);
DenseMatrix class_probabilities(const DefendedClassifier& dc, const DenseMatrix& x,
                                std::uint64_t noise_seed);
std::size_t input_dimension(const DefendedClassifier& dc);

static_assert(InferenceTarget<DefendedClassifier>);
static_assert(!WhiteBoxTarget<DefendedClassifier>);

enum class DefenseKind { none, pca, dlm, drlim };
DefenseKind parse_defense_kind(std::string_view s);
std::string_view to_string(DefenseKind k);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  std::size_t dim = 100;  // p_c for PCA/DLM, embedding size for DrLIM
  double pca_fraction = 0.25;
  double sigma = 0.1;
  double corr_min = 0.95;
  std::uint64_t seed = 0;  // transform and classifier initialization
  std::vector<std::size_t> hidden = {256, 128};  // classifier hidden layers; DrLIM uses none
  std::vector<std::size_t> encoder_hidden = {256};
  std::size_t n_pairs = 20'000;
  TrainConfig train;
  ContrastiveConfig contrastive;
};

/// Fits the transform on the training samples, then trains the classifier on
/// the transformed set. A prefit PCA (at least `dim` components for PCA,
/// round(pca_fraction * dim) for DLM) may be supplied to avoid refitting.
DefendedClassifier train_defended(const DefenseSpec& spec, const LabeledDataset& train,
                                  const PcaModel* prefit = nullptr);

struct ReportRow {
  std::string condition;
  std::string metric;
  double value = 0.0;
  std::size_t count = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// Ordered result rows plus free-form metadata. Rows whose metric is
/// error_rate, confidence or variance_preserved must lie in [0, 1].
struct ExperimentReport {
  std::string id;
  std::vector<ReportRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;
  double wall_seconds = 0.0;

  void add(std::string condition, std::string metric, double value, std::size_t count);
  void note(std::string key, std::string value);
  void append(const ExperimentReport& other, std::string_view prefix = {});
  // Throws DomainError if absent.
  double at(std::string_view condition, std::string_view metric) const;
  std::optional<double> find(std::string_view condition, std::string_view metric) const;
  void validate() const;
};

// Tab-separated body: header "condition\tmetric\tvalue\tcount", rows in insertion order.
std::string report_tsv(const ExperimentReport& r);
// Writes <stem>.tsv and <stem>.meta.json into dir.
void write_report(const ExperimentReport& r, const std::filesystem::path& dir,
                  std::string_view stem);

struct NamedSet {
  std::string name;
  const LabeledDataset* data = nullptr;
};

// One error_rate row per test set.
ExperimentReport evaluate_defended(const DefendedClassifier& dc, const std::vector<NamedSet>& sets);

struct WhiteboxConfig {
  // Step size of the transformed-space attack. Empty: bisect for the
  // smallest step whose transformed-space error reaches target_error.
  std::optional<double> phi_transformed;
  double target_error = 0.5;
  InversionMode mode = InversionMode::ridge;
  double lambda = 1e-6;
  std::uint64_t surrogate_noise_seed = 0;
};

struct WhiteboxOutcome {
  ExperimentReport report;
  LabeledDataset reinverted;  // clipped to [0,1]
  double phi_transformed = 0.0;
  double transformed_error = 0.0;     // (a)
  double pipeline_error = 0.0;        // (b)
  double reconstruction_error = 0.0;  // (c), mean L2 on the clean test inputs
};

/// FGSM against the classifier in transformed space, followed by a linear
/// inversion fitted on surrogate inputs `surrogate_x` and their transforms.
WhiteboxOutcome whitebox_defended_attack(const DefendedClassifier& dc,
                                         const DenseMatrix& surrogate_x,
                                         const LabeledDataset& test, const WhiteboxConfig& cfg);

// Rows "outlier<i>" with metrics normal_confidence and defended_confidence.
ExperimentReport confidence_report(const FeedForwardNet& normal, const DefendedClassifier& defended,
                                   const DenseMatrix& outliers);

/// Indices of up to k samples misclassified by `predicted`, ranked by the
/// distance of their embedding from the clean centroid of their true class.
std::vector<std::size_t> select_outliers(const DenseMatrix& clean_embedding,
                                         std::span<const int> clean_labels,
                                         const DenseMatrix& adv_embedding,
                                         std::span<const int> true_labels,
                                         std::span<const Prediction> predicted, std::size_t k);

// Mean pairwise Euclidean distance between rows of equal and of different labels.
std::pair<double, double> intra_inter_distance(const DenseMatrix& embedding,
                                               std::span<const int> labels);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentSpec {
  std::string id;
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::uint64_t seed = 1;
  std::size_t train_per_class = 1000;
  std::size_t test_per_class = 200;
  std::size_t trials = 5;

  std::vector<std::size_t> arch_a = {784, 256, 128, 10};
  std::vector<std::size_t> arch_b = {784, 300, 10};
  TrainConfig train;  // seed field ignored; model seeds derive from `seed`
  double phi = 0.25;
  double mix_ratio = 0.5;

  std::size_t dim = 100;
  std::vector<double> sigmas = {0.1, 0.3};
  std::vector<double> fractions = {0.05, 0.25, 0.5, 0.75, 0.95};
  double corr_min = 0.95;
  std::vector<std::size_t> defended_hidden = {256, 128};

  std::vector<int> drlim_classes = {0, 1, 2, 3, 4};
  std::size_t drlim_per_class = 2000;
  std::size_t drlim_dim = 30;
  std::vector<std::size_t> encoder_hidden = {256};
  std::size_t n_pairs = 20'000;
  ContrastiveConfig contrastive;
  std::size_t outliers = 8;
  std::size_t scatter_points = 200;

  InversionMode inversion_mode = InversionMode::ridge;
  double lambda = 1e-6;
  std::optional<double> phi_transformed;  // empty = strength-matched
  std::size_t inversion_seeds = 3;

  void validate() const;  // DomainError on invalid ranges
};

inline constexpr std::string_view kExperimentIds[] = {"adv-train-limits", "dlm-grid",
                                                      "drlim-eval", "inversion-attack"};
bool is_experiment_id(std::string_view id);

/// Parses line-oriented `key = value` text with `#` comments. Unknown keys,
/// malformed lines and bad values raise FormatError.
ExperimentSpec parse_experiment_spec(std::string_view text);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct ExperimentData {
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset drlim_train;  // drawn only for drlim-eval
  LabeledDataset drlim_test;
};
// Loads the IDX files named by the spec and draws the seeded class-balanced subsets.
ExperimentData load_experiment_data(const ExperimentSpec& spec);

// Reference model A, trained on `data.train` with the spec's seed.
FeedForwardNet train_reference_model(const ExperimentSpec& spec, const LabeledDataset& train);

/// Runs one protocol. When out_dir is non-empty, report files, plot data and
/// models are written there.
ExperimentReport run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir);
ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentData& data,
                                const std::filesystem::path& out_dir);

}  // namespace advlab
