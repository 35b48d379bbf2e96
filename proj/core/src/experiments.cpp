#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "advlab/error.hpp"
#include "advlab/harness.hpp"
#include "advlab/random.hpp"
#include "advlab/serialize.hpp"

namespace advlab {
namespace {

// Stream identifiers for derive_seed; one per independent random decision.
constexpr std::uint64_t kTrainSubsetStream = 100;
constexpr std::uint64_t kTestSubsetStream = 101;
constexpr std::uint64_t kDrlimTrainStream = 102;
constexpr std::uint64_t kDrlimTestStream = 103;
constexpr std::uint64_t kModelAInit = 200;
constexpr std::uint64_t kModelAOrder = 300;
constexpr std::uint64_t kModelBInit = 400;
constexpr std::uint64_t kModelBOrder = 500;
constexpr std::uint64_t kDefenseStream = 600;
constexpr std::uint64_t kSurrogateNoise = 700;
constexpr std::uint64_t kReconstructionStream = 800;
constexpr std::uint64_t kScatterStream = 900;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

class ValueParser {
 public:
  ValueParser(std::string key, std::string value, std::size_t line)
      : key_(std::move(key)), value_(std::move(value)), line_(line) {}

  double real() const { return real_of(value_); }

  std::uint64_t unsigned_int() const { return uint_of(value_); }

  std::size_t count() const { return static_cast<std::size_t>(uint_of(value_)); }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(value_)) out.push_back(static_cast<std::size_t>(uint_of(item)));
    if (out.empty()) fail("empty list");
    return out;
  }

  std::vector<int> ints() const {
    std::vector<int> out;
    for (const auto& item : split_list(value_)) out.push_back(static_cast<int>(uint_of(item)));
    if (out.empty()) fail("empty list");
    return out;
  }

  std::vector<double> reals() const {
    std::vector<double> out;
    for (const auto& item : split_list(value_)) out.push_back(real_of(item));
    if (out.empty()) fail("empty list");
    return out;
  }

  const std::string& text() const { return value_; }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError("spec line " + std::to_string(line_) + ": key '" + key_ + "': " + why);
  }

 private:
  double real_of(const std::string& s) const {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail("expected a number, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t uint_of(const std::string& s) const {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      fail("expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  std::string key_;
  std::string value_;
  std::size_t line_;
};

using Setter = std::function<void(ExperimentSpec&, const ValueParser&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"id", [](auto& s, const auto& v) { s.id = v.text(); }},
      {"data_dir",
       [](auto& s, const auto& v) {
         const std::filesystem::path dir = v.text();
         s.train_images = dir / "train-images-idx3-ubyte";
         s.train_labels = dir / "train-labels-idx1-ubyte";
         s.test_images = dir / "t10k-images-idx3-ubyte";
         s.test_labels = dir / "t10k-labels-idx1-ubyte";
       }},
      {"train_images", [](auto& s, const auto& v) { s.train_images = v.text(); }},
      {"train_labels", [](auto& s, const auto& v) { s.train_labels = v.text(); }},
      {"test_images", [](auto& s, const auto& v) { s.test_images = v.text(); }},
      {"test_labels", [](auto& s, const auto& v) { s.test_labels = v.text(); }},
      {"seed", [](auto& s, const auto& v) { s.seed = v.unsigned_int(); }},
      {"train_per_class", [](auto& s, const auto& v) { s.train_per_class = v.count(); }},
      {"test_per_class", [](auto& s, const auto& v) { s.test_per_class = v.count(); }},
      {"trials", [](auto& s, const auto& v) { s.trials = v.count(); }},
      {"arch_a", [](auto& s, const auto& v) { s.arch_a = v.counts(); }},
      {"arch_b", [](auto& s, const auto& v) { s.arch_b = v.counts(); }},
      {"epochs", [](auto& s, const auto& v) { s.train.epochs = v.count(); }},
      {"lr", [](auto& s, const auto& v) { s.train.learning_rate = v.real(); }},
      {"batch_size", [](auto& s, const auto& v) { s.train.batch_size = v.count(); }},
      {"phi", [](auto& s, const auto& v) { s.phi = v.real(); }},
      {"mix_ratio", [](auto& s, const auto& v) { s.mix_ratio = v.real(); }},
      {"dim", [](auto& s, const auto& v) { s.dim = v.count(); }},
      {"sigmas", [](auto& s, const auto& v) { s.sigmas = v.reals(); }},
      {"fractions", [](auto& s, const auto& v) { s.fractions = v.reals(); }},
      {"corr_min", [](auto& s, const auto& v) { s.corr_min = v.real(); }},
      {"defended_hidden", [](auto& s, const auto& v) { s.defended_hidden = v.counts(); }},
      {"drlim_classes", [](auto& s, const auto& v) { s.drlim_classes = v.ints(); }},
      {"drlim_per_class", [](auto& s, const auto& v) { s.drlim_per_class = v.count(); }},
      {"drlim_dim", [](auto& s, const auto& v) { s.drlim_dim = v.count(); }},
      {"encoder_hidden", [](auto& s, const auto& v) { s.encoder_hidden = v.counts(); }},
      {"n_pairs", [](auto& s, const auto& v) { s.n_pairs = v.count(); }},
      {"margin", [](auto& s, const auto& v) { s.contrastive.margin = v.real(); }},
      {"drlim_lr", [](auto& s, const auto& v) { s.contrastive.learning_rate = v.real(); }},
      {"drlim_epochs", [](auto& s, const auto& v) { s.contrastive.epochs = v.count(); }},
      {"drlim_batch_pairs", [](auto& s, const auto& v) { s.contrastive.batch_pairs = v.count(); }},
      {"outliers", [](auto& s, const auto& v) { s.outliers = v.count(); }},
      {"scatter_points", [](auto& s, const auto& v) { s.scatter_points = v.count(); }},
      {"inversion_mode",
       [](auto& s, const auto& v) {
         if (v.text() == "ridge") {
           s.inversion_mode = InversionMode::ridge;
         } else if (v.text() == "lasso") {
           s.inversion_mode = InversionMode::lasso;
         } else {
           v.fail("expected ridge or lasso");
         }
       }},
      {"lambda", [](auto& s, const auto& v) { s.lambda = v.real(); }},
      {"phi_transformed",
       [](auto& s, const auto& v) {
         if (v.text() == "auto") {
           s.phi_transformed.reset();
         } else {
           s.phi_transformed = v.real();
         }
       }},
      {"inversion_seeds", [](auto& s, const auto& v) { s.inversion_seeds = v.count(); }},
  };
  return table;
}

void describe_spec(const ExperimentSpec& s, ExperimentReport& r) {
  r.note("seed", std::to_string(s.seed));
  r.note("train_per_class", std::to_string(s.train_per_class));
  r.note("test_per_class", std::to_string(s.test_per_class));
  r.note("epochs", std::to_string(s.train.epochs));
  r.note("lr", fmt(s.train.learning_rate));
  r.note("batch_size", std::to_string(s.train.batch_size));
  r.note("phi", fmt(s.phi));
  r.note("arch_a", join_sizes(s.arch_a));
  if (s.id == "adv-train-limits") {
    r.note("arch_b", join_sizes(s.arch_b));
    r.note("trials", std::to_string(s.trials));
  }
  if (s.id == "adv-train-limits" || s.id == "drlim-eval") r.note("mix_ratio", fmt(s.mix_ratio));
  if (s.id == "dlm-grid" || s.id == "inversion-attack") {
    r.note("dim", std::to_string(s.dim));
    r.note("sigmas", join_doubles(s.sigmas));
    r.note("fractions", join_doubles(s.fractions));
    r.note("corr_min", fmt(s.corr_min));
    r.note("defended_hidden", join_sizes(s.defended_hidden));
  }
  if (s.id == "drlim-eval") {
    std::string classes;
    for (std::size_t i = 0; i < s.drlim_classes.size(); ++i) {
      classes += (i ? "," : "") + std::to_string(s.drlim_classes[i]);
    }
    r.note("drlim_classes", classes);
    r.note("drlim_per_class", std::to_string(s.drlim_per_class));
    r.note("drlim_dim", std::to_string(s.drlim_dim));
    r.note("encoder_hidden", join_sizes(s.encoder_hidden));
    r.note("n_pairs", std::to_string(s.n_pairs));
    r.note("margin", fmt(s.contrastive.margin));
    r.note("drlim_lr", fmt(s.contrastive.learning_rate));
    r.note("drlim_epochs", std::to_string(s.contrastive.epochs));
    r.note("outliers", std::to_string(s.outliers));
  }
  if (s.id == "inversion-attack") {
    r.note("inversion_mode", s.inversion_mode == InversionMode::ridge ? "ridge" : "lasso");
    r.note("lambda", fmt(s.lambda));
    r.note("phi_transformed", s.phi_transformed ? fmt(*s.phi_transformed) : "auto");
    r.note("inversion_seeds", std::to_string(s.inversion_seeds));
  }
}

FeedForwardNet train_model(const std::vector<std::size_t>& arch, const ExperimentSpec& spec,
                           const LabeledDataset& train, std::uint64_t init_stream,
                           std::uint64_t order_stream, std::size_t trial, bool adversarial) {
  TrainConfig cfg = spec.train;
  cfg.seed = derive_seed(spec.seed, order_stream + trial);
  auto init = FeedForwardNet::initialize(arch, derive_seed(spec.seed, init_stream + trial));
  if (!adversarial) return train_sgd(std::move(init), train, cfg).net;
  return adversarial_training(std::move(init), train, cfg, AttackConfig{spec.phi, 0.0, 1.0},
                              spec.mix_ratio)
      .net;
}

AttackConfig attack_cfg(const ExperimentSpec& spec) { return {spec.phi, 0.0, 1.0}; }

std::string cell_name(double sigma, double fraction) {
  return "dlm_s" + fmt(sigma) + "_f" + fmt(fraction);
}

DefenseSpec dlm_spec(const ExperimentSpec& spec, double sigma, double fraction, std::size_t cell) {
  DefenseSpec d;
  d.kind = DefenseKind::dlm;
  d.dim = spec.dim;
  d.pca_fraction = fraction;
  d.sigma = sigma;
  d.corr_min = spec.corr_min;
  d.seed = derive_seed(spec.seed, kDefenseStream + cell);
  d.hidden = spec.defended_hidden;
  d.train = spec.train;
  d.train.seed = derive_seed(d.seed, 1);
  return d;
}

DefenseSpec pca_spec(const ExperimentSpec& spec) {
  DefenseSpec d;
  d.kind = DefenseKind::pca;
  d.dim = spec.dim;
  d.seed = derive_seed(spec.seed, kDefenseStream + 99);
  d.hidden = spec.defended_hidden;
  d.train = spec.train;
  d.train.seed = derive_seed(d.seed, 1);
  return d;
}

void save_model(const std::filesystem::path& out_dir, const std::string& name,
                const std::string& text) {
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir / "models");
  write_text_file(out_dir / "models" / name, text);
}

double error_on(const FeedForwardNet& net, const LabeledDataset& d) {
  return evaluate(net, d).error_rate;
}

double error_on(const DefendedClassifier& dc, const LabeledDataset& d) {
  return evaluate_probs(class_probabilities(dc, d.samples()), d.labels()).error_rate;
}

// ---------------------------------------------------------------------------

ExperimentReport run_adv_train_limits(const ExperimentSpec& spec, const ExperimentData& data,
                                      const std::filesystem::path& out_dir) {
  ExperimentReport r;
  const auto cfg = attack_cfg(spec);
  const LabeledDataset& test = data.test;
  for (std::size_t t = 0; t < spec.trials; ++t) {
    const std::string tag = "trial" + std::to_string(t) + ".";
    const auto a = train_model(spec.arch_a, spec, data.train, kModelAInit, kModelAOrder, t, false);
    const auto b = train_model(spec.arch_b, spec, data.train, kModelBInit, kModelBOrder, t, false);
    const auto a_adt = train_model(spec.arch_a, spec, data.train, kModelAInit, kModelAOrder, t, true);
    const auto b_adt = train_model(spec.arch_b, spec, data.train, kModelBInit, kModelBOrder, t, true);

    const auto adv_a = craft_adversarial(a, test, cfg);
    const auto adv_b = craft_adversarial(b, test, cfg);
    const auto adv_a_adt = craft_adversarial(a_adt, test, cfg);
    const auto adv_b_adt = craft_adversarial(b_adt, test, cfg);
    const std::size_t n = test.size();

    r.add(tag + "A/legitimate", "error_rate", error_on(a, test), n);
    r.add(tag + "A/adv_from_A", "error_rate", error_on(a, adv_a), n);
    r.add(tag + "A/adv_from_B", "error_rate", error_on(a, adv_b), n);
    r.add(tag + "B/legitimate", "error_rate", error_on(b, test), n);
    r.add(tag + "A_ADT/legitimate", "error_rate", error_on(a_adt, test), n);
    r.add(tag + "A_ADT/adv_from_A", "error_rate", error_on(a_adt, adv_a), n);
    r.add(tag + "A_ADT/adv_from_B", "error_rate", error_on(a_adt, adv_b), n);
    r.add(tag + "A_ADT/adv_from_A_ADT", "error_rate", error_on(a_adt, adv_a_adt), n);
    r.add(tag + "A_ADT/adv_from_B_ADT", "error_rate", error_on(a_adt, adv_b_adt), n);

    if (t == 0) {
      save_model(out_dir, "A.json", serialize_net(a));
      save_model(out_dir, "B.json", serialize_net(b));
      save_model(out_dir, "A_ADT.json", serialize_net(a_adt));
      save_model(out_dir, "B_ADT.json", serialize_net(b_adt));
    }
  }
  return r;
}

ExperimentReport run_dlm_grid(const ExperimentSpec& spec, const ExperimentData& data,
                              const std::filesystem::path& out_dir) {
  ExperimentReport r;
  const std::size_t n = data.test.size();
  const auto a = train_reference_model(spec, data.train);
  const auto adv = craft_adversarial(a, data.test, attack_cfg(spec));
  r.add("normal/legitimate", "error_rate", error_on(a, data.test), n);
  r.add("normal/adversarial", "error_rate", error_on(a, adv), n);

  const PcaModel pca = fit_pca(data.train.samples(), spec.dim);
  r.add("pca" + std::to_string(spec.dim), "variance_preserved",
        variance_preservation(pca.eigenvalues, spec.dim), data.train.size());
  if (!out_dir.empty()) {
    std::string curve = "q\tvariance_preserved\n";
    char buf[64];
    for (std::size_t q = 1; q <= pca.eigenvalues.size(); ++q) {
      std::snprintf(buf, sizeof buf, "%zu\t%.10g\n", q, variance_preservation(pca.eigenvalues, q));
      curve += buf;
    }
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "variance.tsv", curve);
  }

  const auto pca_dnn = train_defended(pca_spec(spec), data.train, &pca);
  r.add("pca/legitimate", "error_rate", error_on(pca_dnn, data.test), n);
  r.add("pca/adversarial", "error_rate", error_on(pca_dnn, adv), n);

  std::string grid = "sigma\tpca_fraction\tlegitimate\tadversarial\n";
  std::size_t cell = 0;
  for (double sigma : spec.sigmas) {
    for (double fraction : spec.fractions) {
      const auto dc = train_defended(dlm_spec(spec, sigma, fraction, cell++), data.train, &pca);
      const double clean = error_on(dc, data.test);
      const double attacked = error_on(dc, adv);
      const std::string name = cell_name(sigma, fraction);
      r.add(name + "/legitimate", "error_rate", clean, n);
      r.add(name + "/adversarial", "error_rate", attacked, n);
      char buf[128];
      std::snprintf(buf, sizeof buf, "%g\t%g\t%.10g\t%.10g\n", sigma, fraction, clean, attacked);
      grid += buf;
    }
  }
  if (!out_dir.empty()) {
    write_text_file(out_dir / "grid.tsv", grid);
    save_model(out_dir, "A.json", serialize_net(a));
    save_model(out_dir, "pca_dnn.json", serialize_pipeline(pca_dnn));
  }
  return r;
}

ExperimentReport run_drlim_eval(const ExperimentSpec& spec, const ExperimentData& data,
                                const std::filesystem::path& out_dir) {
  ExperimentReport r;
  const LabeledDataset& test = data.drlim_test;
  const std::size_t n = test.size();
  const auto a = train_reference_model(spec, data.train);
  // Labels of the restricted test set are relabeled class indices; map them
  // back so the 10-class source model attacks the true digits.
  Labels original(test.labels().size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    original[i] = spec.drlim_classes[static_cast<std::size_t>(test.labels()[i])];
  }
  const DenseMatrix adv_x = craft_adversarial(a, test.samples(), original, attack_cfg(spec));
  const LabeledDataset adv(adv_x, test.labels(), test.num_classes());
  const auto normal_pred = predictions_from_probs(forward(a, adv_x));
  const auto normal_clean = predictions_from_probs(forward(a, test.samples()));
  auto normal_error = [&](const std::vector<Prediction>& preds) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) wrong += preds[i].predicted != original[i];
    return static_cast<double>(wrong) / static_cast<double>(preds.size());
  };
  r.add("normal/legitimate", "error_rate", normal_error(normal_clean), n);
  r.add("normal/adversarial", "error_rate", normal_error(normal_pred), n);

  // Adversarially trained baseline on the full test set, attacked by the same source.
  const auto a_adt = train_model(spec.arch_a, spec, data.train, kModelAInit, kModelAOrder, 0, true);
  const auto adv_full = craft_adversarial(a, data.test, attack_cfg(spec));
  r.add("adv_training/legitimate", "error_rate", error_on(a_adt, data.test), data.test.size());
  r.add("adv_training/adv_from_A", "error_rate", error_on(a_adt, adv_full), data.test.size());

  DefenseSpec ds;
  ds.kind = DefenseKind::drlim;
  ds.dim = spec.drlim_dim;
  ds.seed = derive_seed(spec.seed, kDefenseStream + 50);
  ds.encoder_hidden = spec.encoder_hidden;
  ds.n_pairs = spec.n_pairs;
  ds.train = spec.train;
  ds.train.seed = derive_seed(ds.seed, 1);
  ds.contrastive = spec.contrastive;
  ds.contrastive.seed = derive_seed(ds.seed, 2);
  const auto dc = train_defended(ds, data.drlim_train, nullptr);
  r.add("drlim/legitimate", "error_rate", error_on(dc, test), n);
  r.add("drlim/adversarial", "error_rate", error_on(dc, adv), n);

  const auto& enc = std::get<SiameseEncoder>(dc.transform);
  const DenseMatrix clean_emb = embed(enc, test.samples());
  const auto [intra, inter] = intra_inter_distance(clean_emb, test.labels());
  r.add("embedding/intra_class", "mean_distance", intra, n);
  r.add("embedding/inter_class", "mean_distance", inter, n);
  r.add("embedding/intra_over_inter", "ratio", intra / inter, n);

  // Outliers are the normal net's mistakes; encode correctness in the
  // restricted label space expected by select_outliers.
  std::vector<Prediction> relabeled = normal_pred;
  const DenseMatrix adv_emb = embed(enc, adv_x);
  for (std::size_t i = 0; i < relabeled.size(); ++i) {
    relabeled[i].predicted = relabeled[i].predicted == original[i] ? test.labels()[i] : -1;
  }
  const auto picks =
      select_outliers(clean_emb, test.labels(), adv_emb, test.labels(), relabeled, spec.outliers);
  if (!picks.empty()) {
    const DenseMatrix outliers = gather_rows(adv_x, picks);
    const auto conf = confidence_report(a, dc, outliers);
    r.append(conf, "table3.");
    double normal_mean = 0.0, defended_mean = 0.0;
    for (const auto& row : conf.rows) {
      (row.metric == "normal_confidence" ? normal_mean : defended_mean) += row.value;
    }
    r.add("table3/normal", "mean_confidence", normal_mean / static_cast<double>(picks.size()),
          picks.size());
    r.add("table3/drlim", "mean_confidence", defended_mean / static_cast<double>(picks.size()),
          picks.size());
  }

  if (!out_dir.empty()) {
    save_model(out_dir, "A.json", serialize_net(a));
    save_model(out_dir, "drlim_dnn.json", serialize_pipeline(dc));
    if (spec.scatter_points > 0) {
      const auto pairs = make_pairs(data.drlim_train, spec.n_pairs,
                                    derive_seed(spec.seed, kScatterStream));
      ContrastiveConfig cc = spec.contrastive;
      cc.seed = derive_seed(spec.seed, kScatterStream + 1);
      std::vector<std::size_t> sizes{data.drlim_train.dims()};
      sizes.insert(sizes.end(), spec.encoder_hidden.begin(), spec.encoder_hidden.end());
      sizes.push_back(2);
      const auto enc2 = train_drlim(SiameseEncoder::initialize(sizes, derive_seed(spec.seed, kScatterStream + 2)),
                                    data.drlim_train, pairs, cc)
                            .encoder;
      const std::size_t m = std::min(spec.scatter_points, n);
      std::vector<std::size_t> rows(m);
      for (std::size_t i = 0; i < m; ++i) rows[i] = i;
      const DenseMatrix pts = vstack(embed(enc2, gather_rows(test.samples(), rows)),
                                     embed(enc2, gather_rows(adv_x, rows)));
      Labels labels;
      std::vector<std::uint8_t> flags;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i : rows) {
          labels.push_back(original[i]);
          flags.push_back(pass == 1 ? 1 : 0);
        }
      }
      std::ostringstream os;
      write_scatter(os, pts, labels, flags);
      write_text_file(out_dir / "scatter.tsv", os.str());
    }
  }
  return r;
}

ExperimentReport run_inversion_attack(const ExperimentSpec& spec, const ExperimentData& data,
                                      const std::filesystem::path& out_dir) {
  ExperimentReport r;
  const LabeledDataset& test = data.test;
  const std::size_t n = test.size();
  const auto a = train_reference_model(spec, data.train);
  const double pixel_whitebox = error_on(a, craft_adversarial(a, test, attack_cfg(spec)));
  r.add("normal/adversarial", "error_rate", pixel_whitebox, n);

  const PcaModel pca = fit_pca(data.train.samples(), spec.dim);
  const auto pca_dnn = train_defended(pca_spec(spec), data.train, &pca);

  WhiteboxConfig wc;
  wc.phi_transformed = spec.phi_transformed;
  wc.target_error = pixel_whitebox;
  wc.mode = spec.inversion_mode;
  wc.lambda = spec.lambda;
  wc.surrogate_noise_seed = derive_seed(spec.seed, kSurrogateNoise);
  const auto wb = whitebox_defended_attack(pca_dnn, data.train.samples(), test, wc);
  r.append(wb.report, "pca.");
  r.add("normal/reinverted", "error_rate", error_on(a, wb.reinverted), n);

  std::size_t cell = 0;
  for (double sigma : spec.sigmas) {
    for (double fraction : spec.fractions) {
      const auto dc = train_defended(dlm_spec(spec, sigma, fraction, cell++), data.train, &pca);
      r.add(cell_name(sigma, fraction) + "/reinverted", "error_rate", error_on(dc, wb.reinverted), n);
    }
  }

  // Reconstruction error of the regression attack against each transform.
  std::string curve = "seed\tsigma\tpca_fraction\tl2_error\tratio_to_pca\n";
  const PcaModel pure = truncate_pca(pca, spec.dim);
  for (std::size_t s = 0; s < spec.inversion_seeds; ++s) {
    const std::uint64_t base = derive_seed(spec.seed, kReconstructionStream + s);
    const auto inv_pca = invert_linear_map(pca_project(pure, data.train.samples()),
                                           data.train.samples(), spec.inversion_mode, spec.lambda);
    const double pca_err =
        mean_row_l2(test.samples(), apply_inversion(inv_pca, pca_project(pure, test.samples())));
    const std::string tag = "recon.seed" + std::to_string(s) + ".";
    r.add(tag + "pca", "l2_error", pca_err, n);
    std::size_t k = 0;
    for (double sigma : spec.sigmas) {
      for (double fraction : spec.fractions) {
        const auto dlm = fit_dlm(pca, spec.dim, fraction, sigma, derive_seed(base, k++), spec.corr_min);
        const auto inv = invert_linear_map(dlm_transform(dlm, data.train.samples(), derive_seed(base, 1000 + k)),
                                           data.train.samples(), spec.inversion_mode, spec.lambda);
        const double err = mean_row_l2(
            test.samples(),
            apply_inversion(inv, dlm_transform(dlm, test.samples(), derive_seed(base, 2000 + k))));
        const std::string name = tag + cell_name(sigma, fraction);
        r.add(name, "l2_error", err, n);
        r.add(name, "ratio_to_pca", err / pca_err, n);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu\t%g\t%g\t%.10g\t%.10g\n", s, sigma, fraction, err,
                      err / pca_err);
        curve += buf;
      }
    }
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "reconstruction.tsv", curve);
    save_model(out_dir, "A.json", serialize_net(a));
    save_model(out_dir, "pca_dnn.json", serialize_pipeline(pca_dnn));
  }
  return r;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (!is_experiment_id(id)) throw DomainError("unknown experiment id '" + id + "'");
  train.validate();
  contrastive.validate();
  if (train_per_class == 0 || test_per_class == 0) throw DomainError("per-class counts must be >= 1");
  if (trials == 0) throw DomainError("trials must be >= 1");
  if (arch_a.size() < 2 || arch_b.size() < 2) throw DomainError("architectures need >= 2 sizes");
  if (!(phi >= 0.0)) throw DomainError("phi must be >= 0");
  if (!(mix_ratio > 0.0 && mix_ratio <= 1.0)) throw DomainError("mix_ratio must lie in (0, 1]");
  if (dim == 0) throw DomainError("dim must be >= 1");
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw DomainError("sigmas must be >= 0");
  }
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw DomainError("fractions must lie in [0, 1]");
  }
  if (!(corr_min > 0.0 && corr_min < 1.0)) throw DomainError("corr_min must lie in (0, 1)");
  if (drlim_classes.size() < 2) throw DomainError("drlim_classes needs >= 2 classes");
  if (drlim_dim == 0) throw DomainError("drlim_dim must be >= 1");
  if (!(lambda >= 0.0)) throw DomainError("lambda must be >= 0");
  if (phi_transformed && !(*phi_transformed >= 0.0)) {
    throw DomainError("phi_transformed must be >= 0");
  }
}

bool is_experiment_id(std::string_view id) {
  return std::find(std::begin(kExperimentIds), std::end(kExperimentIds), id) !=
         std::end(kExperimentIds);
}

ExperimentSpec parse_experiment_spec(std::string_view text) {
  ExperimentSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw FormatError("spec line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) {
      throw FormatError("spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (value.empty()) {
      throw FormatError("spec line " + std::to_string(lineno) + ": key '" + key + "' has no value");
    }
    it->second(spec, ValueParser(key, value, lineno));
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  ExperimentSpec spec = parse_experiment_spec(read_text_file(path));
  const auto base = path.parent_path();
  for (auto* p : {&spec.train_images, &spec.train_labels, &spec.test_images, &spec.test_labels}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return spec;
}

ExperimentData load_experiment_data(const ExperimentSpec& spec) {
  for (const auto* p : {&spec.train_images, &spec.train_labels, &spec.test_images, &spec.test_labels}) {
    if (p->empty()) throw FormatError("spec does not name all four IDX files");
    if (!std::filesystem::exists(*p)) throw FormatError("missing data file " + p->string());
  }
  const auto train_full = load_idx_dataset(spec.train_images, spec.train_labels);
  const auto test_full = load_idx_dataset(spec.test_images, spec.test_labels);
  const auto classes = all_classes(train_full);
  ExperimentData data;
  data.train = subset(train_full, classes, spec.train_per_class,
                      derive_seed(spec.seed, kTrainSubsetStream));
  data.test = subset(test_full, classes, spec.test_per_class,
                     derive_seed(spec.seed, kTestSubsetStream));
  if (spec.id == "drlim-eval") {
    data.drlim_train = subset(train_full, spec.drlim_classes, spec.drlim_per_class,
                              derive_seed(spec.seed, kDrlimTrainStream));
    data.drlim_test = subset(test_full, spec.drlim_classes, spec.test_per_class,
                             derive_seed(spec.seed, kDrlimTestStream));
  }
  return data;
}

FeedForwardNet train_reference_model(const ExperimentSpec& spec, const LabeledDataset& train) {
  return train_model(spec.arch_a, spec, train, kModelAInit, kModelAOrder, 0, false);
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentData& data,
                                const std::filesystem::path& out_dir) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport r;
  if (spec.id == "adv-train-limits") {
    r = run_adv_train_limits(spec, data, out_dir);
  } else if (spec.id == "dlm-grid") {
    r = run_dlm_grid(spec, data, out_dir);
  } else if (spec.id == "drlim-eval") {
    r = run_drlim_eval(spec, data, out_dir);
  } else {
    r = run_inversion_attack(spec, data, out_dir);
  }
  r.id = spec.id;
  describe_spec(spec, r);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.validate();
  if (!out_dir.empty()) write_report(r, out_dir, "report");
  return r;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  return run_experiment(spec, load_experiment_data(spec), out_dir);
}

}  // namespace advlab
