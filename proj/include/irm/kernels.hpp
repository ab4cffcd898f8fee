#pragma once

// Data-parallel batch kernels. Each OpenMP kernel has a serial counterpart in
// irm::reference that defines its expected output; the two must agree
// bit-for-bit for any worker count.

#include <span>
#include <vector>

#include "irm/records.hpp"
#include "irm/report.hpp"
#include "irm/scoring.hpp"

namespace irm {

/// score_all for every sequence; result[i] belongs to seqs[i].
using ScoreTable = std::vector<std::vector<MetricOutcome>>;

namespace kernels {

/// `workers` <= 0 uses the OpenMP default team size.
ScoreTable score_batch(std::span<const ScoredSequence> seqs, std::span<const Metric> metrics,
                       int workers);

/// evaluate_row for every job; result[i] belongs to jobs[i]. The first
/// failing job's exception (by index) is rethrown.
std::vector<EvalRow> evaluate_rows(std::span<const RowJob> jobs, int workers);

}  // namespace kernels

namespace reference {

ScoreTable score_batch_serial(std::span<const ScoredSequence> seqs, std::span<const Metric> metrics);
std::vector<EvalRow> evaluate_rows_serial(std::span<const RowJob> jobs);

}  // namespace reference
}  // namespace irm
