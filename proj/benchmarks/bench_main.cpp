#include <benchmark/benchmark.h>

#include "advlab/attack.hpp"
#include "advlab/linalg.hpp"
#include "advlab/nn.hpp"
#include "advlab/random.hpp"
#include "advlab/transform.hpp"

using namespace advlab;

namespace {

DenseMatrix uniform_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix m(r, c);
  for (double& v : m.data()) v = rng.uniform();
  return m;
}

Labels cyclic_labels(std::size_t n, int k) {
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % static_cast<std::size_t>(k));
  return y;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = uniform_matrix(n, n, 1), b = uniform_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(784);

void BM_SymEigen(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = uniform_matrix(2 * n, n, 3);
  const auto s = matmul_tn(x, x);
  for (auto _ : state) benchmark::DoNotOptimize(sym_eigen(s));
}
BENCHMARK(BM_SymEigen)->Arg(32)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto net = FeedForwardNet::initialize({784, 256, 128, 10}, 4);
  const auto x = uniform_matrix(batch, 784, 5);
  const auto y = cyclic_labels(batch, 10);
  for (auto _ : state) benchmark::DoNotOptimize(gradients(net, x, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(64)->Arg(256);

void BM_Fgsm(benchmark::State& state) {
  const auto net = FeedForwardNet::initialize({784, 256, 128, 10}, 6);
  const auto x = uniform_matrix(1000, 784, 7);
  const auto y = cyclic_labels(1000, 10);
  for (auto _ : state) benchmark::DoNotOptimize(craft_adversarial(net, x, y, AttackConfig{}));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Fgsm)->Unit(benchmark::kMillisecond);

void BM_RidgeInversion(benchmark::State& state) {
  const auto y = uniform_matrix(2000, 100, 8), x = uniform_matrix(2000, 784, 9);
  for (auto _ : state) benchmark::DoNotOptimize(invert_linear_map(y, x, InversionMode::ridge, 1e-6));
}
BENCHMARK(BM_RidgeInversion)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
