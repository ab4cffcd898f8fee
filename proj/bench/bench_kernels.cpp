// Serial reference against the OpenMP kernels. Run with
//   ./build/bench/irm_bench --benchmark_counters_tabular=true

#include <benchmark/benchmark.h>

#include <random>

#include "fixtures.hpp"
#include "irm/kernels.hpp"
#include "score_sets.hpp"

using namespace irm;

namespace {

const std::vector<ScoredSequence>& batch() {
  static const auto seqs = [] {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> len(50, 400);
    std::vector<ScoredSequence> out;
    for (int i = 0; i < 2000; ++i) {
      irm::testing::SequenceOptions opt;
      opt.reward_shift = i % 2 ? 0.3 : -0.3;
      out.push_back(irm::testing::random_sequence(rng, "s" + std::to_string(i), len(rng), opt));
    }
    return out;
  }();
  return seqs;
}

const std::vector<RowJob>& jobs() {
  static const auto rows = [] {
    std::mt19937_64 rng(2);
    std::vector<RowJob> out;
    for (int i = 0; i < 256; ++i) {
      RowJob j;
      j.task = "multi_domain";
      j.subtask = "s" + std::to_string(i);
      j.metric = kAllMetrics[static_cast<std::size_t>(i) % kAllMetrics.size()];
      j.scores = irm::testing::random_scores(rng, 2000, i % 2 == 0);
      out.push_back(std::move(j));
    }
    return out;
  }();
  return rows;
}

const std::vector<Metric> kMetrics(kAllMetrics.begin(), kAllMetrics.end());

void BM_ScoreSerial(benchmark::State& state) {
  batch();
  for (auto _ : state) benchmark::DoNotOptimize(reference::score_batch_serial(batch(), kMetrics));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch().size()));
}

void BM_ScoreParallel(benchmark::State& state) {
  batch();
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::score_batch(batch(), kMetrics, workers));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch().size()));
}

void BM_RowsSerial(benchmark::State& state) {
  jobs();
  for (auto _ : state) benchmark::DoNotOptimize(reference::evaluate_rows_serial(jobs()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(jobs().size()));
}

void BM_RowsParallel(benchmark::State& state) {
  jobs();
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::evaluate_rows(jobs(), workers));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(jobs().size()));
}

}  // namespace

BENCHMARK(BM_ScoreSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ScoreParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RowsSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RowsParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
