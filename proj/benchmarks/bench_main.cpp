#include <benchmark/benchmark.h>

#include <optional>
#include <vector>

#include "stablehte/datagen.hpp"
#include "stablehte/losses.hpp"
#include "stablehte/matrix.hpp"
#include "stablehte/metrics.hpp"
#include "stablehte/nets.hpp"
#include "stablehte/rff.hpp"
#include "stablehte/rng.hpp"
#include "stablehte/trainer.hpp"

namespace {

using namespace stablehte;

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  RngState rng(seed);
  Matrix m(rows, cols);
  rng.fill_normal(m);
  return m;
}

std::vector<double> random_vector(int n, std::uint64_t seed) {
  RngState rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  rng.fill_normal(v);
  return v;
}

void bm_matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Matrix a = random_matrix(n, n, 1);
  Matrix b = random_matrix(n, n, 2);
  for (auto _ : state) {
    Matrix c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

void bm_mmd2_weighted(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Matrix rep_t = random_matrix(n, 16, 3);
  Matrix rep_c = random_matrix(n, 16, 4);
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  for (auto _ : state) {
    double v = mmd2_weighted(rep_t, rep_c, w, w);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(bm_mmd2_weighted)->Arg(100)->Arg(400);

void bm_hsic_rff(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto a = random_vector(n, 5);
  auto b = random_vector(n, 6);
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  RngState rng(7);
  RffBank bank = RffBank::draw(1, 5, 5, rng);
  for (auto _ : state) {
    double v = hsic_rff_weighted(a, b, w, bank);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(bm_hsic_rff)->Arg(200)->Arg(1000)->Arg(4000);

void bm_decorrelation_loss(benchmark::State& state) {
  const int cols = static_cast<int>(state.range(0));
  const int n = 500;
  Matrix z = random_matrix(n, cols, 8);
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  RngState rng(9);
  RffBank bank = RffBank::draw(cols, 5, 5, rng);
  for (auto _ : state) {
    double v = decorrelation_loss(z, w, bank);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(bm_decorrelation_loss)->Arg(8)->Arg(16)->Arg(32);

void bm_decorrelation_heatmap(benchmark::State& state) {
  const int n = 700;
  Matrix z = random_matrix(n, 26, 10);
  for (auto _ : state) {
    RngState rng(11);
    HeatmapResult hm = decorrelation_heatmap(z, 25, 5, 5, rng);
    benchmark::DoNotOptimize(hm.off_diagonal_mean);
  }
}
BENCHMARK(bm_decorrelation_heatmap);

void bm_biased_sample(benchmark::State& state) {
  SynConfig syn;
  syn.mI = 8;
  syn.mC = 8;
  syn.mA = 8;
  syn.mV = 2;
  syn.n = 4000;
  syn.seed = 13;
  Population pop = generate_population(syn);
  EnvSpec env;
  env.rho = state.range(0) > 0 ? 2.5 : -2.5;
  env.target_count = 500;
  std::uint64_t rep = 0;
  for (auto _ : state) {
    RngState draw = RngState(17).fork("bench", rep++);
    Dataset ds = biased_sample(pop, env, draw);
    benchmark::DoNotOptimize(ds.n());
  }
}
BENCHMARK(bm_biased_sample)->Arg(1)->Arg(-1);

// One full alternation: network step plus weight step at the shapes the
// experiment configs use.
void bm_train_iteration(benchmark::State& state) {
  SynConfig syn;
  syn.mI = 8;
  syn.mC = 8;
  syn.mA = 8;
  syn.mV = 2;
  syn.n = 700;
  syn.seed = 19;
  Population pop = generate_population(syn);

  BackboneConfig net;
  net.kind = BackboneKind::Cfr;
  net.d_r = 2;
  net.d_y = 2;
  net.h_r = 26;
  net.h_y = 12;
  net.batch_norm = true;
  net.outcome = OutcomeKind::Binary;

  LossWeights lw;
  lw.alpha = 1.0;
  lw.gamma1 = 0.03;
  lw.gamma2 = 0.03;
  lw.gamma3 = 0.03;
  lw.lambda = 1e-4;

  TrainConfig tc;
  tc.max_iters = 1;
  tc.patience = 1;
  tc.lr = 1e-3;
  tc.lr_w = 0.1;
  tc.seed = 21;
  tc.record_trace = false;

  Dataset train = pop.data.subset([&] {
    std::vector<int> idx(500);
    for (int i = 0; i < 500; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  }());
  Dataset val = pop.data.subset([&] {
    std::vector<int> idx(200);
    for (int i = 0; i < 200; ++i) idx[static_cast<std::size_t>(i)] = 500 + i;
    return idx;
  }());

  for (auto _ : state) {
    TrainResult r = stablehte::train(net, train, val, lw, tc);
    benchmark::DoNotOptimize(r.state.best_val);
  }
}
BENCHMARK(bm_train_iteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
