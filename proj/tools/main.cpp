// advlab command-line front end. Exit codes: 0 success, 1 runtime or numeric
// failure, 2 usage or spec error.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advlab/attack.hpp"
#include "advlab/dataset.hpp"
#include "advlab/error.hpp"
#include "advlab/harness.hpp"
#include "advlab/nn.hpp"
#include "advlab/serialize.hpp"

namespace fs = std::filesystem;
using namespace advlab;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : Error {
  using Error::Error;
};

struct DataSource {
  std::string data;  // advlab.dataset/1 document
  std::string images;
  std::string labels;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data, "Dataset document (advlab.dataset/1)");
    cmd->add_option("--images", images, "IDX image file (alternative to --data)");
    cmd->add_option("--labels", labels, "IDX label file (with --images)");
  }

  LabeledDataset load() const {
    if (!data.empty()) {
      if (!fs::exists(data)) throw UsageError("missing file " + data);
      return parse_dataset(read_text_file(data));
    }
    if (images.empty() || labels.empty()) {
      throw UsageError("supply --data, or both --images and --labels");
    }
    for (const auto& p : {images, labels}) {
      if (!fs::exists(p)) throw UsageError("missing file " + p);
    }
    return load_idx_dataset(images, labels);
  }
};

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--arch expects comma-separated positive sizes, got '" + text + "'");
    }
  }
  if (out.size() < 2) throw UsageError("--arch needs at least an input and an output size");
  return out;
}

FeedForwardNet load_net(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("missing file " + path);
  return parse_net(read_text_file(path));
}

void print_report(const ExperimentReport& r) { std::cout << report_tsv(r); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial-robustness lab: attacks, defenses and inversion experiments"};
  app.require_subcommand(1);

  // data check
  auto* data_cmd = app.add_subcommand("data", "Dataset utilities");
  data_cmd->require_subcommand(1);
  auto* check_cmd = data_cmd->add_subcommand("check", "Validate an IDX image/label pair");
  std::string check_images, check_labels, check_out;
  std::size_t check_limit = 0;
  check_cmd->add_option("--images", check_images, "IDX image file")->required();
  check_cmd->add_option("--labels", check_labels, "IDX label file")->required();
  check_cmd->add_option("--out", check_out, "Write the first --limit samples as a dataset document");
  check_cmd->add_option("--limit", check_limit, "Sample count for --out (0 = all)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a feedforward classifier");
  std::string arch = "784,256,128,10", train_out;
  TrainConfig tcfg;
  DataSource train_data;
  train_cmd->add_option("--arch", arch, "Comma-separated layer sizes");
  train_cmd->add_option("--epochs", tcfg.epochs, "Training epochs");
  train_cmd->add_option("--lr", tcfg.learning_rate, "SGD learning rate");
  train_cmd->add_option("--seed", tcfg.seed, "Seed for initialization and batch order");
  train_cmd->add_option("--batch-size", tcfg.batch_size, "Minibatch size");
  train_cmd->add_option("--out", train_out, "Output model (advlab.net/1)")->required();
  train_data.attach(train_cmd);

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Craft FGSM samples against a model");
  std::string attack_model, attack_in, attack_out;
  AttackConfig acfg;
  attack_cmd->add_option("--model", attack_model, "Source model (advlab.net/1)")->required();
  attack_cmd->add_option("--phi", acfg.phi, "Perturbation size");
  attack_cmd->add_option("--in", attack_in, "Input dataset document")->required();
  attack_cmd->add_option("--out", attack_out, "Output adversarial dataset document")->required();

  // defend
  auto* defend_cmd = app.add_subcommand("defend", "Fit a transform and train a defended classifier");
  std::string defend_kind = "dlm", defend_out;
  DefenseSpec dspec;
  DataSource defend_data;
  defend_cmd->add_option("--kind", defend_kind, "pca | dlm | drlim")
      ->check(CLI::IsMember({"pca", "dlm", "drlim"}));
  defend_cmd->add_option("--dim", dspec.dim, "Transformed dimension");
  defend_cmd->add_option("--pca-fraction", dspec.pca_fraction, "Share of PCA rows in the DLM map");
  defend_cmd->add_option("--sigma", dspec.sigma, "DLM noise standard deviation");
  defend_cmd->add_option("--seed", dspec.seed, "Seed for the transform and classifier");
  defend_cmd->add_option("--epochs", dspec.train.epochs, "Classifier epochs");
  defend_cmd->add_option("--lr", dspec.train.learning_rate, "Classifier learning rate");
  defend_cmd->add_option("--out", defend_out, "Output pipeline (advlab.pipeline/1)")->required();
  defend_data.attach(defend_cmd);

  // invert
  auto* invert_cmd = app.add_subcommand("invert", "Regression inversion attack on a pipeline");
  std::string invert_pipeline, invert_mode = "ridge", invert_report, invert_test;
  double invert_lambda = 1e-6;
  std::optional<double> invert_phi;
  double invert_target = 0.5;
  DataSource invert_data;
  invert_cmd->add_option("--pipeline", invert_pipeline, "Pipeline document")->required();
  invert_cmd->add_option("--mode", invert_mode, "ridge | lasso")
      ->check(CLI::IsMember({"ridge", "lasso"}));
  invert_cmd->add_option("--lambda", invert_lambda, "Regularization strength");
  invert_cmd->add_option("--report", invert_report, "Output report (TSV)")->required();
  invert_cmd->add_option("--test", invert_test, "Test dataset document (default: --data)");
  invert_cmd->add_option("--phi-transformed", invert_phi, "Transformed-space step (default: matched)");
  invert_cmd->add_option("--target-error", invert_target, "Error to match when the step is matched");
  invert_data.attach(invert_cmd);

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run a built-in experiment protocol");
  std::string exp_id, exp_spec, exp_out;
  exp_cmd->add_option("--id", exp_id,
                      "adv-train-limits | dlm-grid | drlim-eval | inversion-attack")
      ->required();
  exp_cmd->add_option("--spec", exp_spec, "Spec file (key = value lines)")->required();
  exp_cmd->add_option("--out", exp_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (check_cmd->parsed()) {
      for (const auto& p : {check_images, check_labels}) {
        if (!fs::exists(p)) throw UsageError("missing file " + p);
      }
      const auto d = load_idx_dataset(check_images, check_labels);
      std::cout << "samples\t" << d.size() << "\npixels\t" << d.dims() << '\n';
      const auto counts = d.class_counts();
      for (std::size_t c = 0; c < counts.size(); ++c) {
        std::cout << "class_" << c << '\t' << counts[c] << '\n';
      }
      if (!check_out.empty()) {
        const std::size_t n = check_limit == 0 ? d.size() : std::min(check_limit, d.size());
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        Labels labels(d.labels().begin(), d.labels().begin() + static_cast<std::ptrdiff_t>(n));
        write_text_file(check_out, serialize_dataset(LabeledDataset(
                                       gather_rows(d.samples(), rows), labels, d.num_classes())));
      }
    } else if (train_cmd->parsed()) {
      const auto sizes = parse_sizes(arch);
      const auto d = train_data.load();
      if (sizes.front() != d.dims()) throw UsageError("--arch input size differs from data width");
      if (sizes.back() != static_cast<std::size_t>(d.num_classes())) {
        throw UsageError("--arch output size differs from the class count");
      }
      const auto r = train_sgd(FeedForwardNet::initialize(sizes, tcfg.seed), d, tcfg);
      write_text_file(train_out, serialize_net(r.net));
      for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
        std::printf("epoch %zu\tloss %.6f\n", e + 1, r.epoch_loss[e]);
      }
      std::printf("training error %.4f\n", evaluate(r.net, d).error_rate);
    } else if (attack_cmd->parsed()) {
      const auto net = load_net(attack_model);
      if (!fs::exists(attack_in)) throw UsageError("missing file " + attack_in);
      const auto d = parse_dataset(read_text_file(attack_in));
      const auto adv = craft_adversarial(net, d, acfg);
      write_text_file(attack_out, serialize_dataset(adv));
      std::printf("clean error %.4f\nadversarial error %.4f\n", evaluate(net, d).error_rate,
                  evaluate(net, adv).error_rate);
    } else if (defend_cmd->parsed()) {
      dspec.kind = parse_defense_kind(defend_kind);
      dspec.train.seed = dspec.seed;
      dspec.contrastive.seed = dspec.seed;
      const auto d = defend_data.load();
      const auto dc = train_defended(dspec, d);
      write_text_file(defend_out, serialize_pipeline(dc));
      std::printf("training error %.4f\n",
                  evaluate_probs(class_probabilities(dc, d.samples()), d.labels()).error_rate);
    } else if (invert_cmd->parsed()) {
      if (!fs::exists(invert_pipeline)) throw UsageError("missing file " + invert_pipeline);
      const auto dc = parse_pipeline(read_text_file(invert_pipeline));
      const auto surrogate = invert_data.load();
      LabeledDataset test = surrogate;
      if (!invert_test.empty()) {
        if (!fs::exists(invert_test)) throw UsageError("missing file " + invert_test);
        test = parse_dataset(read_text_file(invert_test));
      }
      WhiteboxConfig wc;
      wc.phi_transformed = invert_phi;
      wc.target_error = invert_target;
      wc.mode = invert_mode == "ridge" ? InversionMode::ridge : InversionMode::lasso;
      wc.lambda = invert_lambda;
      wc.surrogate_noise_seed = dc.train_noise_seed ^ dc.eval_noise_seed;
      auto out = whitebox_defended_attack(dc, surrogate.samples(), test, wc);
      out.report.id = "invert";
      out.report.note("pipeline", invert_pipeline);
      out.report.note("mode", invert_mode);
      write_text_file(invert_report, report_tsv(out.report));
      write_text_file(invert_report + ".meta.json", report_metadata_json(out.report));
      print_report(out.report);
    } else if (exp_cmd->parsed()) {
      if (!is_experiment_id(exp_id)) throw UsageError("unknown experiment id '" + exp_id + "'");
      if (!fs::exists(exp_spec)) throw UsageError("missing spec file " + exp_spec);
      ExperimentSpec spec;
      ExperimentData data;
      try {
        spec = load_experiment_spec(exp_spec);
        if (!spec.id.empty() && spec.id != exp_id) {
          throw UsageError("spec id '" + spec.id + "' differs from --id " + exp_id);
        }
        spec.id = exp_id;
        spec.validate();
        data = load_experiment_data(spec);
      } catch (const DomainError& e) {
        throw UsageError(e.what());
      }
      const auto r = run_experiment(spec, data, exp_out);
      print_report(r);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
