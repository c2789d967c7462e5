#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "lbl/cls_loss.hpp"
#include "lbl/domqueue.hpp"
#include "lbl/protostore.hpp"

using namespace lbl;

namespace {

Matrix unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  normalize_rows(m);
  return m;
}

std::vector<std::uint32_t> batch_labels(std::size_t n_classes, std::size_t p, Rng& rng) {
  std::vector<std::uint32_t> labels;
  for (auto c : rng.sample_without_replacement(static_cast<std::uint32_t>(n_classes),
                                               static_cast<std::uint32_t>(p)))
    labels.insert(labels.end(), {c, c});
  return labels;
}

// Args: N, n_iter.
void BM_SelectRandom(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  const auto n_iter = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  for (auto _ : state) {
    const auto labels = batch_labels(N, 32, rng);
    benchmark::DoNotOptimize(select_random_ids(labels, n_iter, N, rng));
  }
}
BENCHMARK(BM_SelectRandom)->Args({5000, 400})->Args({50000, 1600})->Args({500000, 6400});

// Args: N, q, n_iter.
void BM_SelectDominant(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  const auto q = static_cast<std::size_t>(state.range(1));
  const auto n_iter = static_cast<std::size_t>(state.range(2));
  const auto queues = init_queues(build_graph(unit_rows(N, 16, 2), 3 * q), q, 3 * q);
  Rng rng(3);
  for (auto _ : state) {
    const auto labels = batch_labels(N, 32, rng);
    benchmark::DoNotOptimize(select_dominant(labels, queues, n_iter, rng));
  }
}
BENCHMARK(BM_SelectDominant)->Args({5000, 10, 400})->Args({5000, 20, 800});

// Softmax over the working set against every prototype. Args: n_iter, D.
void BM_WorkingSetSoftmax(benchmark::State& state) {
  const auto n_iter = static_cast<std::size_t>(state.range(0));
  const auto D = static_cast<std::size_t>(state.range(1));
  const Matrix f = unit_rows(64, D, 4);
  const Matrix w = unit_rows(n_iter, D, 5);
  std::vector<std::uint32_t> pos(64);
  std::iota(pos.begin(), pos.end(), 0u);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_ce(f, w, pos, 16.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n_iter));
}
BENCHMARK(BM_WorkingSetSoftmax)->Args({400, 32})->Args({1600, 32})->Args({5000, 32});

void BM_BuildGraph(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  const Matrix ref = unit_rows(N, 32, 6);
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(ref, 30));
}
BENCHMARK(BM_BuildGraph)->Arg(500)->Arg(2000)->Arg(5000)->Unit(benchmark::kMillisecond);

// Extract, perturb and write back n_iter rows of an N x 32 store.
void BM_ExtractWriteBack(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  const auto n_iter = static_cast<std::size_t>(state.range(1));
  PrototypeStore store(unit_rows(N, 32, 7));
  Rng rng(8);
  for (auto _ : state) {
    auto ids = rng.sample_without_replacement(static_cast<std::uint32_t>(N),
                                              static_cast<std::uint32_t>(n_iter));
    WorkingSet ws = store.extract(std::move(ids));
    Matrix upd = ws.rows;
    for (std::size_t r = 0; r < upd.rows(); r += 2) upd(r, 0) += 1e-3;
    store.write_back(ws, upd);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n_iter));
}
BENCHMARK(BM_ExtractWriteBack)->Args({5000, 400})->Args({50000, 1600});

}  // namespace

BENCHMARK_MAIN();
