#include "irm/report.hpp"

#include <charconv>
#include <cstdio>
#include <ostream>

namespace irm {

EvalRow evaluate_row(const RowJob& job) {
  EvalRow row;
  row.task = job.task;
  row.subtask = job.subtask;
  row.metric = job.metric;
  const auto counts = count_classes(job.scores);
  row.n_human = counts.n_human;
  row.n_llm = counts.n_llm;
  const std::string where = job.task + "/" + job.subtask + " " + std::string(to_string(job.metric)) + ": ";
  try {
    row.auroc = auroc(job.scores);
    row.threshold_used = job.threshold ? *job.threshold : best_f1_threshold(job.scores).threshold;
    const auto c = confusion_at(job.scores, row.threshold_used);
    row.precision = c.precision;
    row.recall = c.recall;
    row.f1 = c.f1;
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError(where + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
  return row;
}

EvalRow macro_average(std::span<const EvalRow> rows) {
  if (rows.empty()) throw ValidationError("macro_average of no rows");
  EvalRow avg;
  avg.task = rows.front().task;
  avg.subtask = "Avg.";
  avg.metric = rows.front().metric;
  long double auroc = 0, precision = 0, recall = 0, f1 = 0, threshold = 0;
  for (const auto& r : rows) {
    auroc += r.auroc;
    precision += r.precision;
    recall += r.recall;
    f1 += r.f1;
    threshold += r.threshold_used;
    avg.n_human += r.n_human;
    avg.n_llm += r.n_llm;
  }
  const auto n = static_cast<long double>(rows.size());
  avg.auroc = static_cast<double>(auroc / n);
  avg.precision = static_cast<double>(precision / n);
  avg.recall = static_cast<double>(recall / n);
  avg.f1 = static_cast<double>(f1 / n);
  avg.threshold_used = static_cast<double>(threshold / n);
  return avg;
}

void SummaryRow::finalize_average() {
  long double sum = 0.0L;
  int n = 0;
  for (const auto& c : cells) {
    if (c) {
      sum += *c;
      ++n;
    }
  }
  avg = n > 0 ? std::optional<double>(static_cast<double>(sum / n)) : std::nullopt;
}

std::string format_percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", rate * 100.0);
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

void write_row(std::ostream& out, const EvalRow& r) {
  out << r.task << ',' << r.subtask << ',' << to_string(r.metric) << ',' << format_percent(r.auroc)
      << ',' << format_percent(r.precision) << ',' << format_percent(r.recall) << ','
      << format_percent(r.f1) << ',' << format_double(r.threshold_used) << ',' << r.n_human << ','
      << r.n_llm << '\n';
}

std::string cell_text(const std::optional<double>& v) { return v ? format_percent(*v) : ""; }

}  // namespace

void write_rows_csv(std::ostream& out, const EvalReport& report) {
  out << "task,subtask,metric,auroc,precision,recall,f1,threshold,n_human,n_llm\n";
  for (const auto& r : report.rows) write_row(out, r);
  for (const auto& r : report.aggregate) write_row(out, r);
}

void write_summary_csv(std::ostream& out, const EvalReport& report) {
  out << "metric";
  for (auto c : kSummaryColumns) out << ',' << c;
  out << ",Avg.\n";
  for (const auto& row : report.summary) {
    out << to_string(row.metric);
    for (const auto& c : row.cells) out << ',' << cell_text(c);
    out << ',' << cell_text(row.avg) << '\n';
  }
}

void write_summary_markdown(std::ostream& out, const EvalReport& report) {
  out << "| Metric |";
  for (auto c : kSummaryColumns) out << ' ' << c << " |";
  out << " Avg. |\n|---|";
  for (std::size_t i = 0; i < kSummaryColumns.size(); ++i) out << "---:|";
  out << "---:|\n";
  for (const auto& row : report.summary) {
    out << "| " << to_string(row.metric) << " |";
    for (const auto& c : row.cells) out << ' ' << (c ? format_percent(*c) : "-") << " |";
    out << ' ' << (row.avg ? format_percent(*row.avg) : "-") << " |\n";
  }
}

}  // namespace irm
