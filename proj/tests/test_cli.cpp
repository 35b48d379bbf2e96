#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "advlab/random.hpp"
#include "advlab/serialize.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string("\"") + ADVLAB_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

// 8x8 images; each class lights a distinct diagonal band.
void write_idx(const fs::path& images, const fs::path& labels, std::size_t per_class,
               std::uint64_t seed) {
  advlab::Rng rng(seed);
  const std::size_t n = 10 * per_class;
  std::ofstream im(images, std::ios::binary), lb(labels, std::ios::binary);
  put_be32(im, 0x803);
  put_be32(im, static_cast<std::uint32_t>(n));
  put_be32(im, 8);
  put_be32(im, 8);
  put_be32(lb, 0x801);
  put_be32(lb, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 10);
    lb.put(static_cast<char>(label));
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        const bool on = (r + c) % 10 == label || (r * 8 + c) % 10 == label;
        const double v = std::clamp((on ? 200.0 : 30.0) + 20.0 * rng.normal(), 0.0, 255.0);
        im.put(static_cast<char>(static_cast<std::uint8_t>(v)));
      }
  }
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    // Per-process directory: ctest may run the cases of this suite concurrently.
    dir_ = fs::temp_directory_path() / ("advlab_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_idx(dir_ / "train-images-idx3-ubyte", dir_ / "train-labels-idx1-ubyte", 12, 1);
    write_idx(dir_ / "t10k-images-idx3-ubyte", dir_ / "t10k-labels-idx1-ubyte", 6, 2);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path p(const std::string& name) { return dir_ / name; }
  static std::string q(const std::string& name) { return "\"" + p(name).string() + "\""; }

  static std::string read(const std::string& name) {
    std::ifstream in(p(name), std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  static void write_spec(const std::string& name, const std::string& body) {
    std::ofstream(p(name)) << "data_dir = " << dir_.string() << "\n" << body;
  }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("", p("log")), 2);
  EXPECT_EQ(run("frobnicate", p("log")), 2);
  EXPECT_EQ(run("train --epochs 1", p("log")), 2);  // --out missing
  EXPECT_EQ(run("train --epochs two --out " + q("m.json"), p("log")), 2);
  write_spec("any.spec", "");
  EXPECT_EQ(run("experiment --id table-9 --spec " + q("any.spec") + " --out " + q("o"), p("log")), 2);
  EXPECT_EQ(run("experiment --id dlm-grid --spec " + q("absent.spec") + " --out " + q("o"), p("log")), 2);
  write_spec("bad.spec", "colour = red\n");
  EXPECT_EQ(run("experiment --id dlm-grid --spec " + q("bad.spec") + " --out " + q("o"), p("log")), 2);
  write_spec("range.spec", "fractions = 1.5\n");
  EXPECT_EQ(run("experiment --id dlm-grid --spec " + q("range.spec") + " --out " + q("o"), p("log")), 2);
  EXPECT_EQ(run("attack --model " + q("absent.json") + " --in " + q("x") + " --out " + q("y"), p("log")), 2);
}

TEST_F(Cli, RuntimeFailureExitsWithOne) {
  // Corrupt IDX payload: the magic number is wrong.
  std::ofstream(p("junk-images"), std::ios::binary) << "not an idx file at all";
  EXPECT_EQ(run("data check --images " + q("junk-images") + " --labels " +
                    q("train-labels-idx1-ubyte"),
                p("log")),
            1);
}

TEST_F(Cli, EndToEndPipeline) {
  ASSERT_EQ(run("data check --images " + q("train-images-idx3-ubyte") + " --labels " +
                    q("train-labels-idx1-ubyte") + " --out " + q("train.json"),
                p("check.log")),
            0);
  EXPECT_NE(read("check.log").find("samples\t120"), std::string::npos);
  ASSERT_EQ(run("data check --images " + q("t10k-images-idx3-ubyte") + " --labels " +
                    q("t10k-labels-idx1-ubyte") + " --out " + q("test.json"),
                p("log")),
            0);

  ASSERT_EQ(run("train --arch 64,16,10 --epochs 5 --lr 0.2 --seed 3 --batch-size 8 --data " +
                    q("train.json") + " --out " + q("model.json"),
                p("train.log")),
            0);
  EXPECT_EQ(advlab::document_schema(read("model.json")), "advlab.net/1");

  ASSERT_EQ(run("attack --model " + q("model.json") + " --phi 0.2 --in " + q("test.json") +
                    " --out " + q("adv.json"),
                p("attack.log")),
            0);
  const auto adv = advlab::parse_dataset(read("adv.json"));
  EXPECT_EQ(adv.size(), 60u);

  ASSERT_EQ(run("defend --kind pca --dim 8 --seed 2 --epochs 5 --lr 0.2 --images " +
                    q("train-images-idx3-ubyte") + " --labels " + q("train-labels-idx1-ubyte") +
                    " --out " + q("pca.json"),
                p("defend.log")),
            0);
  ASSERT_EQ(run("defend --kind dlm --dim 8 --pca-fraction 0.5 --sigma 0.1 --seed 2 --epochs 5 --lr 0.2 --data " +
                    q("train.json") + " --out " + q("dlm.json"),
                p("log")),
            0);
  EXPECT_EQ(run("defend --kind svm --data " + q("train.json") + " --out " + q("x.json"), p("log")), 2);

  ASSERT_EQ(run("invert --pipeline " + q("pca.json") + " --mode ridge --lambda 0.001 --data " +
                    q("train.json") + " --test " + q("test.json") + " --phi-transformed 0.3 --report " +
                    q("invert.tsv"),
                p("invert.log")),
            0);
  const std::string report = read("invert.tsv");
  EXPECT_EQ(report.rfind("condition\tmetric\tvalue\tcount\n", 0), 0u);
  EXPECT_TRUE(fs::exists(p("invert.tsv.meta.json")));
  EXPECT_EQ(run("invert --pipeline " + q("pca.json") + " --mode cubic --data " + q("train.json") +
                    " --report " + q("x.tsv"),
                p("log")),
            2);
}

TEST_F(Cli, ExperimentsAreDeterministic) {
  write_spec("tiny.spec",
             "train_per_class = 8\ntest_per_class = 4\ntrials = 1\nepochs = 2\n"
             "arch_a = 64,16,10\narch_b = 64,12,10\ndim = 8\nsigmas = 0.1\nfractions = 0.25, 0.5\n"
             "defended_hidden = 12\ndrlim_per_class = 8\ndrlim_dim = 4\nencoder_hidden = 8\n"
             "n_pairs = 100\ndrlim_epochs = 2\noutliers = 3\nscatter_points = 10\ninversion_seeds = 1\n");
  for (const auto& id : advlab::kExperimentIds) {
    const std::string name(id);
    ASSERT_EQ(run("experiment --id " + name + " --spec " + q("tiny.spec") + " --out " + q(name + "-1"),
                  p(name + ".log")),
              0)
        << read(name + ".log");
    ASSERT_EQ(run("experiment --id " + name + " --spec " + q("tiny.spec") + " --out " + q(name + "-2"),
                  p(name + ".log")),
              0);
    const std::string first = read(name + "-1/report.tsv");
    EXPECT_FALSE(first.empty());
    EXPECT_EQ(first, read(name + "-2/report.tsv")) << name;
    EXPECT_TRUE(fs::exists(p(name + "-1/report.meta.json")));
  }
  EXPECT_TRUE(fs::exists(p("dlm-grid-1/grid.tsv")));
  EXPECT_TRUE(fs::exists(p("dlm-grid-1/variance.tsv")));
  EXPECT_TRUE(fs::exists(p("drlim-eval-1/scatter.tsv")));
  EXPECT_TRUE(fs::exists(p("inversion-attack-1/reconstruction.tsv")));
}
