#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "irm/kernels.hpp"
#include "score_sets.hpp"

using namespace irm;

namespace {

std::vector<ScoredSequence> mixed_batch(std::size_t n) {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<std::size_t> len(1, 120);
  std::vector<ScoredSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    irm::testing::SequenceOptions opt;
    opt.ranks = i % 3 != 0;
    opt.moments = i % 5 != 0;
    opt.reward_shift = i % 2 ? 0.5 : -0.5;
    out.push_back(irm::testing::random_sequence(rng, "s" + std::to_string(i), len(rng), opt));
  }
  return out;
}

std::vector<RowJob> row_jobs(std::size_t n) {
  std::mt19937_64 rng(62);
  std::vector<RowJob> jobs;
  for (std::size_t i = 0; i < n; ++i) {
    RowJob j;
    j.task = "multi_domain";
    j.subtask = "s" + std::to_string(i);
    j.metric = kAllMetrics[i % kAllMetrics.size()];
    j.scores = irm::testing::random_scores(rng, 20 + i * 3, i % 2 == 0);
    if (i % 4 == 1) j.threshold = 0.3;
    jobs.push_back(std::move(j));
  }
  return jobs;
}

}  // namespace

TEST_CASE("parallel scoring matches the serial reference") {
  const auto seqs = mixed_batch(300);
  const std::vector<Metric> metrics(kAllMetrics.begin(), kAllMetrics.end());
  const auto want = reference::score_batch_serial(seqs, metrics);
  REQUIRE(want.size() == seqs.size());
  for (int workers = 1; workers <= 8; ++workers) {
    CHECK(kernels::score_batch(seqs, metrics, workers) == want);
  }
  CHECK(kernels::score_batch(seqs, metrics, 0) == want);
}

TEST_CASE("parallel row evaluation matches the serial reference") {
  const auto jobs = row_jobs(64);
  const auto want = reference::evaluate_rows_serial(jobs);
  for (int workers = 1; workers <= 8; ++workers) {
    CHECK(kernels::evaluate_rows(jobs, workers) == want);
  }
}

TEST_CASE("the earliest failing row is rethrown") {
  auto jobs = row_jobs(40);
  jobs[7].subtask = "first";
  jobs[7].scores = irm::testing::labeled({1.0}, {});
  jobs[30].subtask = "second";
  jobs[30].scores = irm::testing::labeled({}, {1.0});
  for (int workers : {1, 3, 8}) {
    CHECK_THROWS_WITH_AS(kernels::evaluate_rows(jobs, workers), doctest::Contains("first"), DegenerateInputError);
  }
}

TEST_CASE("empty batches") {
  const std::vector<ScoredSequence> none;
  const std::vector<Metric> metrics{Metric::kIrmSum};
  CHECK(kernels::score_batch(none, metrics, 4).empty());
  CHECK(kernels::evaluate_rows(std::vector<RowJob>{}, 4).empty());
}
