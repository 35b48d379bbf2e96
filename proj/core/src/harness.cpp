#include "advlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <type_traits>

#include "advlab/error.hpp"
#include "advlab/random.hpp"
#include "advlab/serialize.hpp"

namespace advlab {
namespace {

// Stream identifiers for derive_seed.
constexpr std::uint64_t kTransformStream = 11;
constexpr std::uint64_t kTrainNoiseStream = 12;
constexpr std::uint64_t kEvalNoiseStream = 13;
constexpr std::uint64_t kPairStream = 14;

bool is_rate_metric(std::string_view metric) {
  return metric == "error_rate" || metric == "confidence" || metric == "variance_preserved" ||
         metric.ends_with("_confidence");
}

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden,
                               std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

double error_rate_of(const DenseMatrix& probs, std::span<const int> labels) {
  return evaluate_probs(probs, labels).error_rate;
}

}  // namespace

std::string_view transform_kind(const TransformModel& t) {
  static constexpr std::string_view names[] = {"none", "pca", "dlm", "drlim"};
  return names[t.index()];
}

std::size_t transform_output_size(const TransformModel& t) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NoTransform>) {
          return 0;
        } else if constexpr (std::is_same_v<T, PcaModel>) {
          return m.components();
        } else {
          return m.output_size();
        }
      },
      t);
}

DenseMatrix apply_transform(const TransformModel& t, const DenseMatrix& x,
                            std::uint64_t noise_seed) {
  return std::visit(
      [&](const auto& m) -> DenseMatrix {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NoTransform>) {
          return x;
        } else if constexpr (std::is_same_v<T, PcaModel>) {
          return pca_project(m, x);
        } else if constexpr (std::is_same_v<T, DlmModel>) {
          return dlm_transform(m, x, noise_seed);
        } else {
          return embed(m, x);
        }
      },
      t);
}

std::size_t DefendedClassifier::input_size() const {
  return std::visit(
      [&](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NoTransform>) {
          return classifier.input_size();
        } else {
          return m.input_size();
        }
      },
      transform);
}

void DefendedClassifier::validate() const {
  classifier.validate();
  if (classifier.output != OutputKind::softmax) {
    throw DomainError("DefendedClassifier: classifier must have a softmax output");
  }
  const std::size_t width = transform_output_size(transform);
  if (width != 0 && width != classifier.input_size()) {
    throw ShapeError("DefendedClassifier: transform emits " + std::to_string(width) +
                     " features, classifier expects " + std::to_string(classifier.input_size()));
  }
}

DenseMatrix class_probabilities(const DefendedClassifier& dc, const DenseMatrix& x,
                                std::uint64_t noise_seed) {
  if (x.cols() != dc.input_size()) throw ShapeError("DefendedClassifier: input width mismatch");
  return forward(dc.classifier, apply_transform(dc.transform, x, noise_seed));
}

DenseMatrix class_probabilities(const DefendedClassifier& dc, const DenseMatrix& x) {
  return class_probabilities(dc, x, dc.eval_noise_seed);
}

std::size_t input_dimension(const DefendedClassifier& dc) { return dc.input_size(); }

DefenseKind parse_defense_kind(std::string_view s) {
  if (s == "none") return DefenseKind::none;
  if (s == "pca") return DefenseKind::pca;
  if (s == "dlm") return DefenseKind::dlm;
  if (s == "drlim") return DefenseKind::drlim;
  throw DomainError("unknown defense kind '" + std::string(s) + "'");
}

std::string_view to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::pca: return "pca";
    case DefenseKind::dlm: return "dlm";
    case DefenseKind::drlim: return "drlim";
  }
  return "none";
}

DefendedClassifier train_defended(const DefenseSpec& spec, const LabeledDataset& train,
                                  const PcaModel* prefit) {
  if (train.empty()) throw EmptyInputError("train_defended: empty training set");
  const std::size_t p = train.dims();
  const auto classes = static_cast<std::size_t>(train.num_classes());
  DefendedClassifier dc;
  dc.train_noise_seed = derive_seed(spec.seed, kTrainNoiseStream);
  dc.eval_noise_seed = derive_seed(spec.seed, kEvalNoiseStream);

  std::vector<std::size_t> hidden = spec.hidden;
  switch (spec.kind) {
    case DefenseKind::none:
      dc.transform = NoTransform{};
      break;
    case DefenseKind::pca:
      if (prefit != nullptr && prefit->components() >= spec.dim && prefit->input_size() == p) {
        dc.transform = truncate_pca(*prefit, spec.dim);
      } else {
        dc.transform = fit_pca(train.samples(), spec.dim);
      }
      break;
    case DefenseKind::dlm: {
      const std::uint64_t tseed = derive_seed(spec.seed, kTransformStream);
      if (prefit != nullptr && prefit->input_size() == p) {
        dc.transform = fit_dlm(*prefit, spec.dim, spec.pca_fraction, spec.sigma, tseed,
                               spec.corr_min);
      } else {
        dc.transform = fit_dlm(train.samples(), spec.dim, spec.pca_fraction, spec.sigma, tseed,
                               spec.corr_min);
      }
      break;
    }
    case DefenseKind::drlim: {
      const auto pairs = make_pairs(train, spec.n_pairs, derive_seed(spec.seed, kPairStream));
      auto enc = SiameseEncoder::initialize(chain(p, spec.encoder_hidden, spec.dim),
                                            derive_seed(spec.seed, kTransformStream));
      dc.transform = train_drlim(std::move(enc), train, pairs, spec.contrastive).encoder;
      hidden.clear();  // single softmax layer on the embedding
      break;
    }
  }

  const DenseMatrix features = apply_transform(dc.transform, train.samples(), dc.train_noise_seed);
  auto init = FeedForwardNet::initialize(chain(features.cols(), hidden, classes), spec.seed);
  dc.classifier = train_sgd(std::move(init), features, train.labels(), spec.train).net;
  dc.validate();
  return dc;
}

void ExperimentReport::add(std::string condition, std::string metric, double value,
                           std::size_t count) {
  rows.push_back({std::move(condition), std::move(metric), value, count});
}

void ExperimentReport::note(std::string key, std::string value) {
  metadata.emplace_back(std::move(key), std::move(value));
}

void ExperimentReport::append(const ExperimentReport& other, std::string_view prefix) {
  for (const auto& r : other.rows) {
    rows.push_back({std::string(prefix) + r.condition, r.metric, r.value, r.count});
  }
}

std::optional<double> ExperimentReport::find(std::string_view condition,
                                             std::string_view metric) const {
  for (const auto& r : rows) {
    if (r.condition == condition && r.metric == metric) return r.value;
  }
  return std::nullopt;
}

double ExperimentReport::at(std::string_view condition, std::string_view metric) const {
  if (auto v = find(condition, metric)) return *v;
  throw DomainError("report has no row " + std::string(condition) + "/" + std::string(metric));
}

void ExperimentReport::validate() const {
  for (const auto& r : rows) {
    if (r.condition.empty() || r.metric.empty()) throw DomainError("report row without a label");
    if (!std::isfinite(r.value)) throw DomainError("report row " + r.condition + " is not finite");
    if (is_rate_metric(r.metric) && !(r.value >= 0.0 && r.value <= 1.0)) {
      throw DomainError("report row " + r.condition + "/" + r.metric + " outside [0, 1]");
    }
  }
}

std::string report_tsv(const ExperimentReport& r) {
  std::string out = "condition\tmetric\tvalue\tcount\n";
  char buf[64];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.10g", row.value);
    out += row.condition + '\t' + row.metric + '\t' + buf + '\t' + std::to_string(row.count) + '\n';
  }
  return out;
}

void write_report(const ExperimentReport& r, const std::filesystem::path& dir,
                  std::string_view stem) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / (std::string(stem) + ".tsv"), report_tsv(r));
  write_text_file(dir / (std::string(stem) + ".meta.json"), report_metadata_json(r));
}

ExperimentReport evaluate_defended(const DefendedClassifier& dc,
                                   const std::vector<NamedSet>& sets) {
  ExperimentReport report;
  report.id = "evaluate";
  for (const auto& s : sets) {
    if (s.data == nullptr) throw EmptyInputError("evaluate_defended: null test set " + s.name);
    if (s.data->dims() != dc.input_size()) {
      throw ShapeError("evaluate_defended: test set " + s.name + " has the wrong width");
    }
    const double err = error_rate_of(class_probabilities(dc, s.data->samples()), s.data->labels());
    report.add(s.name, "error_rate", err, s.data->size());
  }
  report.validate();
  return report;
}

WhiteboxOutcome whitebox_defended_attack(const DefendedClassifier& dc,
                                         const DenseMatrix& surrogate_x,
                                         const LabeledDataset& test, const WhiteboxConfig& cfg) {
  if (std::holds_alternative<NoTransform>(dc.transform)) {
    throw DomainError("whitebox_defended_attack: pipeline has no transform");
  }
  if (test.empty()) throw EmptyInputError("whitebox_defended_attack: empty test set");
  const DenseMatrix y = apply_transform(dc.transform, test.samples(), dc.eval_noise_seed);

  // Sign of the classifier's input gradient in transformed space.
  const DenseMatrix step = fgsm_perturbation(dc.classifier, y, test.labels(), {1.0, -1.0, 1.0});
  auto attacked = [&](double phi) {
    DenseMatrix out = y;
    auto o = out.data();
    auto s = step.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += phi * s[i];
    return out;
  };
  auto error_at = [&](double phi) {
    return error_rate_of(forward(dc.classifier, attacked(phi)), test.labels());
  };

  double phi = 0.0;
  if (cfg.phi_transformed) {
    phi = *cfg.phi_transformed;
    if (!(phi >= 0.0)) throw DomainError("whitebox_defended_attack: phi must be >= 0");
  } else {
    double lo = 0.0;
    double hi = 0.125;
    while (error_at(hi) < cfg.target_error) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e4) throw ConvergenceError("whitebox_defended_attack: target error unreachable", {});
    }
    for (int it = 0; it < 30; ++it) {
      const double mid = 0.5 * (lo + hi);
      (error_at(mid) >= cfg.target_error ? hi : lo) = mid;
    }
    phi = hi;
  }

  WhiteboxOutcome out;
  out.phi_transformed = phi;
  const DenseMatrix y_adv = attacked(phi);
  out.transformed_error = error_rate_of(forward(dc.classifier, y_adv), test.labels());

  const DenseMatrix y_surrogate =
      apply_transform(dc.transform, surrogate_x, cfg.surrogate_noise_seed);
  InversionResult inv = invert_linear_map(y_surrogate, surrogate_x, cfg.mode, cfg.lambda);
  inv.reconstructed = DenseMatrix();

  out.reinverted = LabeledDataset(clip(apply_inversion(inv, y_adv), 0.0, 1.0), test.labels(),
                                  test.num_classes());
  out.pipeline_error =
      error_rate_of(class_probabilities(dc, out.reinverted.samples()), test.labels());
  out.reconstruction_error = mean_row_l2(test.samples(), apply_inversion(inv, y));

  out.report.id = "whitebox";
  out.report.add("transformed_space", "error_rate", out.transformed_error, test.size());
  out.report.add("reinverted", "error_rate", out.pipeline_error, test.size());
  out.report.add("inversion", "l2_error", out.reconstruction_error, test.size());
  out.report.add("transformed_space", "phi", phi, test.size());
  out.report.validate();
  return out;
}

ExperimentReport confidence_report(const FeedForwardNet& normal, const DefendedClassifier& defended,
                                   const DenseMatrix& outliers) {
  if (outliers.empty()) throw EmptyInputError("confidence_report: no outliers");
  const auto a = predictions_from_probs(forward(normal, outliers));
  const auto b = predictions_from_probs(class_probabilities(defended, outliers));
  ExperimentReport report;
  report.id = "confidence";
  for (std::size_t i = 0; i < a.size(); ++i) {
    report.add("outlier" + std::to_string(i), "normal_confidence", a[i].confidence, 1);
    report.add("outlier" + std::to_string(i), "defended_confidence", b[i].confidence, 1);
  }
  report.validate();
  return report;
}

std::vector<std::size_t> select_outliers(const DenseMatrix& clean_embedding,
                                         std::span<const int> clean_labels,
                                         const DenseMatrix& adv_embedding,
                                         std::span<const int> true_labels,
                                         std::span<const Prediction> predicted, std::size_t k) {
  if (clean_embedding.rows() != clean_labels.size() ||
      adv_embedding.rows() != true_labels.size() || predicted.size() != true_labels.size() ||
      clean_embedding.cols() != adv_embedding.cols()) {
    throw ShapeError("select_outliers: inconsistent sizes");
  }
  const int classes = 1 + *std::max_element(clean_labels.begin(), clean_labels.end());
  const std::size_t d = clean_embedding.cols();
  std::vector<Vector> centroid(static_cast<std::size_t>(classes), Vector(d, 0.0));
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < clean_labels.size(); ++i) {
    auto& c = centroid[static_cast<std::size_t>(clean_labels[i])];
    auto row = clean_embedding.row(i);
    for (std::size_t j = 0; j < d; ++j) c[j] += row[j];
    ++counts[static_cast<std::size_t>(clean_labels[i])];
  }
  for (std::size_t c = 0; c < centroid.size(); ++c) {
    if (counts[c] == 0) continue;
    for (double& v : centroid[c]) v /= static_cast<double>(counts[c]);
  }

  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (predicted[i].predicted == true_labels[i]) continue;
    const auto label = static_cast<std::size_t>(true_labels[i]);
    if (label >= centroid.size() || counts[label] == 0) continue;
    auto row = adv_embedding.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (row[j] - centroid[label][j]) * (row[j] - centroid[label][j]);
    ranked.emplace_back(std::sqrt(s), i);
  }
  // Larger distance first; index breaks ties.
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.push_back(ranked[i].second);
  return out;
}

std::pair<double, double> intra_inter_distance(const DenseMatrix& embedding,
                                               std::span<const int> labels) {
  if (embedding.rows() != labels.size()) throw ShapeError("intra_inter_distance: size mismatch");
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < embedding.rows(); ++i) {
    auto a = embedding.row(i);
    for (std::size_t j = i + 1; j < embedding.rows(); ++j) {
      auto b = embedding.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
      if (labels[i] == labels[j]) {
        intra += std::sqrt(s);
        ++n_intra;
      } else {
        inter += std::sqrt(s);
        ++n_inter;
      }
    }
  }
  if (n_intra == 0 || n_inter == 0) {
    throw CompositionError("intra_inter_distance: need both same-label and cross-label pairs");
  }
  return {intra / static_cast<double>(n_intra), inter / static_cast<double>(n_inter)};
}

}  // namespace advlab
