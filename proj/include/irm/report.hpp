#pragma once

// Per-subtask evaluation rows and the task-grid summary, with their CSV and
// Markdown serializations.

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irm/evaluation.hpp"

namespace irm {

/// Canonical task keys.
inline constexpr std::string_view kTaskMultiDomain = "multi_domain";
inline constexpr std::string_view kTaskMultiLlm = "multi_llm";
inline constexpr std::string_view kTaskMultiAttack = "multi_attack";
inline constexpr std::string_view kTaskVaryingLength = "varying_length";
inline constexpr std::string_view kTaskHumanWriting = "human_writing";

struct EvalRow {
  std::string task;
  std::string subtask;
  Metric metric = Metric::kIrmSum;
  double auroc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold_used = 0.0;
  std::size_t n_human = 0;
  std::size_t n_llm = 0;

  bool operator==(const EvalRow&) const = default;
};

/// One unit of evaluation work: a (task, subtask, metric) slice of scores and
/// the threshold to apply. Without a threshold the slice's best-F1 threshold
/// is used.
struct RowJob {
  std::string task;
  std::string subtask;
  Metric metric = Metric::kIrmSum;
  std::vector<LabeledScore> scores;
  std::optional<double> threshold;
};

EvalRow evaluate_row(const RowJob& job);

/// Macro-average of rows (rates averaged, counts summed). The subtask field
/// is set to "Avg.".
EvalRow macro_average(std::span<const EvalRow> rows);

inline constexpr std::array<std::string_view, 13> kSummaryColumns = {
    "Multi-Domain AUROC", "Multi-Domain F1", "Multi-LLM AUROC",     "Multi-LLM F1",
    "Multi-Attack AUROC", "Multi-Attack F1", "Gen-Domain F1",       "Gen-LLM F1",
    "Gen-Attack F1",      "Length-Train F1", "Length-Test F1",      "Human-Writing AUROC",
    "Human-Writing F1"};

/// One metric's row of the task grid. Cells are rates in [0, 1]; absent when
/// the task was not evaluated. `avg` is the unweighted mean of present cells.
struct SummaryRow {
  Metric metric = Metric::kIrmSum;
  std::array<std::optional<double>, kSummaryColumns.size()> cells{};
  std::optional<double> avg;

  void finalize_average();
};

struct EvalReport {
  std::vector<EvalRow> rows;       // one per (task, subtask, metric)
  std::vector<EvalRow> aggregate;  // one macro-average per (task, metric)
  std::vector<SummaryRow> summary; // one per metric
};

/// Formats a rate as a percentage with two decimals ("97.97").
std::string format_percent(double rate);

/// Columns: task,subtask,metric,auroc,precision,recall,f1,threshold,n_human,n_llm.
/// Rates are percentages; thresholds use shortest round-trip formatting.
void write_rows_csv(std::ostream& out, const EvalReport& report);
/// Columns: metric, the 13 task-grid columns, Avg.
void write_summary_csv(std::ostream& out, const EvalReport& report);
void write_summary_markdown(std::ostream& out, const EvalReport& report);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

}  // namespace irm
