// Acceptance run: one PASS/FAIL line per criterion. Criteria 1-2 run in
// process; 3 trains the reference model in process; 4-9 drive the CLI and
// read its report files. Exits 77 when the MNIST files are absent.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/drlim.hpp"
#include "advlab/harness.hpp"
#include "advlab/linalg.hpp"
#include "advlab/nn.hpp"
#include "advlab/serialize.hpp"
#include "advlab/transform.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace advlab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

int failures = 0;

void verdict(int id, bool ok, const std::string& detail, double secs) {
  std::printf("criterion %d: %s  %s  [%.1f s]\n", id, ok ? "PASS" : "FAIL", detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

using Table = std::map<std::pair<std::string, std::string>, double>;

Table read_report(const fs::path& path) {
  Table t;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cond, metric, value;
    std::getline(ss, cond, '\t');
    std::getline(ss, metric, '\t');
    std::getline(ss, value, '\t');
    t[{cond, metric}] = std::stod(value);
  }
  return t;
}

double get(const Table& t, const std::string& cond, const std::string& metric = "error_rate") {
  const auto it = t.find({cond, metric});
  if (it == t.end()) throw std::runtime_error("report lacks " + cond + " / " + metric);
  return it->second;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& id, const fs::path& spec, const fs::path& out) {
  const std::string cmd = std::string("\"") + ADVLAB_CLI_PATH + "\" experiment --id " + id +
                          " --spec \"" + spec.string() + "\" --out \"" + out.string() +
                          "\" > \"" + (out.string() + ".log") + "\" 2>&1";
  return std::system(cmd.c_str());
}

// ---------------------------------------------------------------------------
// Criterion 1: central-difference gradient checks.

std::vector<bool> relu_pattern(const FeedForwardNet& net, const DenseMatrix& x) {
  std::vector<bool> pattern;
  DenseMatrix a = x;
  for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
    DenseMatrix z = matmul(a, net.weights[l]);
    add_row_vector(z, net.biases[l]);
    for (double& v : z.data()) {
      pattern.push_back(v > 0.0);
      v = std::max(v, 0.0);
    }
    a = std::move(z);
  }
  return pattern;
}

struct FdTally {
  std::size_t checked = 0;
  std::size_t bad = 0;
  double worst = 0.0;

  // Skips a coordinate whose +-h step crosses a ReLU kink of `watch`.
  void check(double& param, double analytic, const std::function<double()>& loss,
             const std::function<std::vector<bool>()>& pattern) {
    constexpr double h = 1e-6;
    const auto base = pattern();
    const double keep = param;
    param = keep + h;
    const bool kink = pattern() != base;
    param = keep - h;
    const bool kink2 = pattern() != base;
    param = keep;
    if (kink || kink2) return;
    const double numeric = oracle::central_difference(loss, param, h);
    ++checked;
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    // Below 1e-4 the difference quotient's rounding noise dominates; those
    // coordinates are covered by close_relative's absolute floor instead.
    if (scale >= 1e-4) worst = std::max(worst, std::abs(analytic - numeric) / scale);
    if (!oracle::close_relative(analytic, numeric, 1e-4)) ++bad;
  }
};

void criterion_gradients() {
  const auto t0 = Clock::now();
  FdTally tally;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(5000 + seed);
    const std::size_t depth = 1 + seed % 3;
    std::vector<std::size_t> sizes{3 + rng.index(4)};
    for (std::size_t l = 0; l < depth; ++l) sizes.push_back(3 + rng.index(4));
    sizes.push_back(2 + rng.index(3));
    auto net = FeedForwardNet::initialize(sizes, 6000 + seed);
    for (auto& b : net.biases)
      for (double& v : b) v = rng.uniform(-0.1, 0.1);
    DenseMatrix x = oracle::random_unit_matrix(3, sizes[0], 7000 + seed);
    Labels y;
    for (std::size_t i = 0; i < 3; ++i) y.push_back(static_cast<int>(rng.index(sizes.back())));
    const auto g = gradients(net, x, y);
    const auto loss = [&] { return cross_entropy(forward(net, x), y); };
    const auto pattern = [&] { return relu_pattern(net, x); };
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      for (std::size_t k = 0; k < net.weights[l].size(); ++k)
        tally.check(net.weights[l].data()[k], g.weight_grads[l].data()[k], loss, pattern);
      for (std::size_t k = 0; k < net.biases[l].size(); ++k)
        tally.check(net.biases[l][k], g.bias_grads[l][k], loss, pattern);
    }
    for (std::size_t k = 0; k < x.size(); ++k) tally.check(x.data()[k], g.input_grad.data()[k], loss, pattern);

    // Contrastive gradients of a twin encoder on the same seed.
    std::vector<std::size_t> esizes{sizes[0], 4, 3};
    auto enc = SiameseEncoder::initialize(esizes, 8000 + seed);
    for (auto& b : enc.net.biases)
      for (double& v : b) v = rng.uniform(-0.1, 0.1);
    const DenseMatrix s = oracle::random_unit_matrix(4, sizes[0], 9000 + seed);
    const std::vector<Pair> pairs{{0, 1, 0}, {2, 3, 1}, {1, 2, 1}};
    const double margin = 3.0;
    const auto cg = contrastive_gradients(enc, s, pairs, margin);
    const auto closs = [&] {
      double total = 0.0;
      for (const auto& p : pairs)
        total += contrastive_loss(pair_distance(enc, s.row(p.first), s.row(p.second)), p.y, margin);
      return total / static_cast<double>(pairs.size());
    };
    const auto cpattern = [&] { return relu_pattern(enc.net, s); };
    for (std::size_t l = 0; l < enc.net.num_layers(); ++l) {
      for (std::size_t k = 0; k < enc.net.weights[l].size(); ++k)
        tally.check(enc.net.weights[l].data()[k], cg.params.weight_grads[l].data()[k], closs, cpattern);
      for (std::size_t k = 0; k < enc.net.biases[l].size(); ++k)
        tally.check(enc.net.biases[l][k], cg.params.bias_grads[l][k], closs, cpattern);
    }
  }
  const double secs = seconds_since(t0);
  verdict(1, tally.bad == 0 && tally.checked > 0 && secs < 10.0,
          std::to_string(tally.checked) + " coordinates, " + std::to_string(tally.bad) +
              " over 1e-4, worst rel (|g| >= 1e-4) " + fmt("%.2e", tally.worst),
          secs);
}

// ---------------------------------------------------------------------------
// Criterion 2: eigen and PCA oracles plus MNIST variance preservation.

void criterion_pca(const LabeledDataset& train) {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;

  const auto r = oracle::random_matrix(30, 30, 11);
  DenseMatrix s(30, 30);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 30; ++j) s(i, j) = r(i, j) + r(j, i);
  const auto e = sym_eigen(s);
  const auto back = oracle::naive_matmul(oracle::naive_matmul(e.eigenvectors, DenseMatrix::diagonal(e.eigenvalues)),
                                         oracle::naive_transpose(e.eigenvectors));
  const double eig_rel = frobenius_norm(subtract(back, s)) / frobenius_norm(s);
  ok = ok && eig_rel <= 1e-9;

  const auto x = oracle::random_unit_matrix(50, 12, 12);
  const auto full = fit_pca(x, 12);
  const double rt = frobenius_norm(subtract(pca_reconstruct(full, pca_project(full, x)), x)) /
                    frobenius_norm(x);
  ok = ok && rt <= 1e-9;

  const auto mnist = fit_pca(train.samples(), 100);
  bool monotone = true;
  double prev = 0.0;
  for (std::size_t q = 1; q <= mnist.eigenvalues.size(); ++q) {
    const double v = variance_preservation(mnist.eigenvalues, q);
    monotone = monotone && v >= prev;
    prev = v;
  }
  const double v100 = variance_preservation(mnist.eigenvalues, 100);
  const double secs = seconds_since(t0);
  ok = ok && monotone && v100 > 0.90 && secs < 60.0;
  detail = "eigen rel " + fmt("%.1e", eig_rel) + ", round-trip rel " + fmt("%.1e", rt) +
           ", monotone " + (monotone ? "yes" : "no") + ", MNIST q=100 variance " + fmt("%.4f", v100);
  verdict(2, ok, detail, secs);
}

// ---------------------------------------------------------------------------

void criterion_attack(const ExperimentSpec& spec, const ExperimentData& data) {
  const auto t0 = Clock::now();
  const auto a = train_reference_model(spec, data.train);
  const double clean = evaluate(a, data.test).error_rate;
  const double adv = evaluate(a, craft_adversarial(a, data.test, AttackConfig{0.25, 0.0, 1.0})).error_rate;
  const double secs = seconds_since(t0);
  const double ratio = clean > 0 ? adv / clean : INFINITY;
  verdict(3, clean <= 0.05 && adv >= 0.5 && ratio >= 10.0 && secs < 180.0,
          "clean " + fmt("%.4f", clean) + ", FGSM(0.25) " + fmt("%.4f", adv) + ", ratio " +
              fmt("%.1f", ratio),
          secs);
}

void criterion_adv_training(const fs::path& spec, const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path out = work / "adv-train-limits";
  if (run_cli("adv-train-limits", spec, out) != 0) {
    verdict(4, false, "CLI run failed, see " + out.string() + ".log", seconds_since(t0));
    return;
  }
  const auto t = read_report(out / "report.tsv");
  int first = 0, second = 0, floor_ok = 0;
  std::string cells;
  const int trials = 5;
  for (int i = 0; i < trials; ++i) {
    const std::string p = "trial" + std::to_string(i) + ".A_ADT/";
    const double from_b = get(t, p + "adv_from_B");
    const double from_a = get(t, p + "adv_from_A");
    const double self = get(t, p + "adv_from_A_ADT");
    first += from_b < from_a;
    second += from_a < self;
    floor_ok += self >= 0.5;
    cells += " [" + fmt("%.3f", from_b) + " " + fmt("%.3f", from_a) + " " + fmt("%.3f", self) + "]";
  }
  const double secs = seconds_since(t0);
  verdict(4, first >= 4 && second >= 4 && floor_ok >= 4 && secs < 900.0,
          "B<A " + std::to_string(first) + "/5, A<self " + std::to_string(second) + "/5, self>=0.5 " +
              std::to_string(floor_ok) + "/5;" + cells,
          secs);
}

void criterion_dlm(const fs::path& spec, const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path out = work / "dlm-grid";
  if (run_cli("dlm-grid", spec, out) != 0) {
    verdict(5, false, "CLI run failed, see " + out.string() + ".log", seconds_since(t0));
    return;
  }
  const auto t = read_report(out / "report.tsv");
  const double base_clean = get(t, "normal/legitimate");
  const double base_adv = get(t, "normal/adversarial");
  bool ok = true;
  std::string detail = "undefended " + fmt("%.4f", base_clean) + "/" + fmt("%.4f", base_adv) + ";";
  for (const char* f : {"0.25", "0.5", "0.75", "0.95"}) {
    const std::string cell = std::string("dlm_s0.1_f") + f;
    const double clean = get(t, cell + "/legitimate");
    const double adv = get(t, cell + "/adversarial");
    ok = ok && clean - base_clean <= 0.03 && adv <= 0.5 * base_adv;
    detail += " f" + std::string(f) + " " + fmt("%.4f", clean) + "/" + fmt("%.4f", adv);
  }
  for (const char* sigma : {"0.1", "0.3"}) {
    const double worst = get(t, std::string("dlm_s") + sigma + "_f0.05/legitimate");
    for (const char* f : {"0.25", "0.5", "0.75", "0.95"}) {
      ok = ok && worst > get(t, std::string("dlm_s") + sigma + "_f" + f + "/legitimate");
    }
    detail += "; s" + std::string(sigma) + " f0.05 " + fmt("%.4f", worst);
  }
  const double secs = seconds_since(t0);
  verdict(5, ok && secs < 900.0, detail, secs);
}

void criteria_drlim(const fs::path& spec, const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path out = work / "drlim-eval";
  if (run_cli("drlim-eval", spec, out) != 0) {
    verdict(6, false, "CLI run failed, see " + out.string() + ".log", seconds_since(t0));
    verdict(7, false, "CLI run failed", 0.0);
    return;
  }
  const auto t = read_report(out / "report.tsv");
  const double secs = seconds_since(t0);
  const double adv = get(t, "drlim/adversarial");
  const double clean = get(t, "drlim/legitimate");
  const double ratio = get(t, "embedding/intra_over_inter", "ratio");
  const double baseline = get(t, "adv_training/adv_from_A");
  verdict(6, adv < baseline && clean <= 0.08 && ratio < 0.8 && secs < 900.0,
          "DrLIM-DNN adversarial " + fmt("%.4f", adv) + " vs adversarial-training transfer " +
              fmt("%.4f", baseline) + ", clean " + fmt("%.4f", clean) + ", intra/inter " +
              fmt("%.3f", ratio),
          secs);
  const auto normal = t.find({"table3/normal", "mean_confidence"});
  const auto drlim = t.find({"table3/drlim", "mean_confidence"});
  if (normal == t.end() || drlim == t.end()) {
    verdict(7, false, "no misclassified outliers were found", secs);
    return;
  }
  verdict(7, normal->second >= 0.9 && drlim->second <= 0.7,
          "mean outlier confidence normal " + fmt("%.4f", normal->second) + ", DrLIM-DNN " +
              fmt("%.4f", drlim->second),
          secs);
}

void criterion_inversion(const fs::path& spec, const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path out = work / "inversion-attack";
  if (run_cli("inversion-attack", spec, out) != 0) {
    verdict(8, false, "CLI run failed, see " + out.string() + ".log", seconds_since(t0));
    return;
  }
  const auto t = read_report(out / "report.tsv");
  const double power = get(t, "normal/reinverted");
  bool ok = power >= 0.5;
  std::string detail = "PCA-inverted attack power " + fmt("%.4f", power) + ";";

  // Reconstruction ratio on every seed for sigma >= 0.1 and pca_fraction <= 0.75.
  double min_ratio = INFINITY;
  std::string argmin;
  for (int seed = 0; seed < 3; ++seed) {
    for (const char* sigma : {"0.1", "0.3"}) {
      for (const char* f : {"0.05", "0.25", "0.5", "0.75"}) {
        const std::string cell = "recon.seed" + std::to_string(seed) + ".dlm_s" + sigma + "_f" + f;
        const double ratio = get(t, cell, "ratio_to_pca");
        if (ratio < min_ratio) {
          min_ratio = ratio;
          argmin = cell;
        }
        ok = ok && ratio >= 3.0;
      }
    }
  }
  detail += " min L2 ratio " + fmt("%.3f", min_ratio) + " (" + argmin + ");";

  const std::map<std::string, double> table = {
      {"dlm_s0.1_f0.95", 0.2846}, {"dlm_s0.1_f0.75", 0.2011}, {"dlm_s0.1_f0.5", 0.1447},
      {"dlm_s0.1_f0.25", 0.1131}, {"dlm_s0.1_f0.05", 0.3691}, {"dlm_s0.3_f0.95", 0.1864},
      {"dlm_s0.3_f0.75", 0.1729}, {"dlm_s0.3_f0.5", 0.1449},  {"dlm_s0.3_f0.25", 0.1884},
      {"dlm_s0.3_f0.05", 0.4766}};
  int within = 0;
  for (const auto& [cell, ref] : table) {
    const double err = get(t, cell + "/reinverted");
    within += err <= 2.0 * ref;
    if (err > 2.0 * ref) detail += " " + cell + " " + fmt("%.4f", err) + " > 2x" + fmt("%.4f", ref);
  }
  ok = ok && within == static_cast<int>(table.size());
  detail += " DLM-DNN within 2x band " + std::to_string(within) + "/" + std::to_string(table.size());
  const double secs = seconds_since(t0);
  verdict(8, ok && secs < 900.0, detail, secs);
}

void criterion_determinism(const fs::path& full_spec, const fs::path& small_spec, const fs::path& work) {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (const auto& id : kExperimentIds) {
    const std::string name(id);
    const fs::path a = work / ("det-" + name + "-1");
    const fs::path b = work / ("det-" + name + "-2");
    const bool ran = run_cli(name, small_spec, a) == 0 && run_cli(name, small_spec, b) == 0;
    const bool same = ran && slurp(a / "report.tsv") == slurp(b / "report.tsv") &&
                      !slurp(a / "report.tsv").empty();
    ok = ok && same;
    detail += name + (same ? " identical; " : " DIFFERS; ");
  }
  // Full-scale rerun of the grid against the criterion-5 output.
  const fs::path rerun = work / "dlm-grid-rerun";
  const bool same = run_cli("dlm-grid", full_spec, rerun) == 0 &&
                    slurp(rerun / "report.tsv") == slurp(work / "dlm-grid" / "report.tsv");
  ok = ok && same;
  detail += std::string("full dlm-grid rerun ") + (same ? "identical" : "DIFFERS");
  verdict(9, ok, detail, seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "advlab_acceptance";
  const fs::path data_dir = ADVLAB_MNIST_DIR;
  const auto t_all = Clock::now();

  criterion_gradients();

  for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                        "t10k-labels-idx1-ubyte"}) {
    if (!fs::exists(data_dir / f)) {
      std::printf("criteria 2-9: SKIP  MNIST files not found in %s\n", data_dir.string().c_str());
      return failures == 0 ? 77 : 1;
    }
  }

  fs::remove_all(work);
  fs::create_directories(work);
  // Defaults give the desk-scale protocol (1000/200 per class, 5 trials, 20
  // epochs, phi 0.25). The defense protocols attack at phi 0.1, where the
  // undefended model is not yet saturated.
  const fs::path adv_spec = work / "adv-train.spec";
  std::ofstream(adv_spec) << "data_dir = " << data_dir.string() << "\nseed = 1\n";
  const fs::path full_spec = work / "desk.spec";
  std::ofstream(full_spec) << "data_dir = " << data_dir.string() << "\nseed = 1\nphi = 0.1\n";
  const fs::path small_spec = work / "small.spec";
  {
    std::ofstream spec(small_spec);
    spec << "data_dir = " << data_dir.string() << "\nseed = 3\n"
         << "train_per_class = 30\ntest_per_class = 10\ntrials = 1\nepochs = 2\n"
         << "dim = 20\nsigmas = 0.1\nfractions = 0.25, 0.5\n"
         << "drlim_per_class = 60\ndrlim_dim = 5\nn_pairs = 400\ndrlim_epochs = 2\n"
         << "outliers = 3\nscatter_points = 20\ninversion_seeds = 1\n";
  }

  auto spec = load_experiment_spec(full_spec);
  spec.id = "dlm-grid";
  const auto data = load_experiment_data(spec);
  criterion_pca(data.train);
  criterion_attack(spec, data);

  criterion_adv_training(adv_spec, work);
  criterion_dlm(full_spec, work);
  criteria_drlim(full_spec, work);
  criterion_inversion(full_spec, work);
  criterion_determinism(full_spec, small_spec, work);

  std::printf("acceptance: %d failing criteria, total %.1f s\n", failures, seconds_since(t_all));
  return failures == 0 ? 0 : 1;
}
