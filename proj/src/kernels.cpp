#include "irm/kernels.hpp"

#include <exception>

#include <omp.h>

namespace irm {
namespace {

int team_size(int workers) { return workers > 0 ? workers : omp_get_max_threads(); }

}  // namespace

namespace kernels {

ScoreTable score_batch(std::span<const ScoredSequence> seqs, std::span<const Metric> metrics,
                       int workers) {
  if (metrics.empty()) throw ValidationError("score_batch: no metrics requested");
  ScoreTable out(seqs.size());
  const auto n = static_cast<std::ptrdiff_t>(seqs.size());
  // score_all reports metric failures in its outcomes and does not throw here.
#pragma omp parallel for schedule(dynamic, 16) num_threads(team_size(workers))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = score_all(seqs[static_cast<std::size_t>(i)], metrics);
  }
  return out;
}

std::vector<EvalRow> evaluate_rows(std::span<const RowJob> jobs, int workers) {
  std::vector<EvalRow> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(team_size(workers))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = evaluate_row(jobs[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace kernels

namespace reference {

ScoreTable score_batch_serial(std::span<const ScoredSequence> seqs, std::span<const Metric> metrics) {
  if (metrics.empty()) throw ValidationError("score_batch: no metrics requested");
  ScoreTable out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(score_all(s, metrics));
  return out;
}

std::vector<EvalRow> evaluate_rows_serial(std::span<const RowJob> jobs) {
  std::vector<EvalRow> out;
  out.reserve(jobs.size());
  for (const auto& j : jobs) out.push_back(evaluate_row(j));
  return out;
}

}  // namespace reference
}  // namespace irm
