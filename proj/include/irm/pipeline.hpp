#pragma once

// End-to-end orchestration behind the irm-detect commands: score, calibrate,
// evaluate, figure-data and validate-dataset.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "irm/dataset.hpp"
#include "irm/evaluation.hpp"
#include "irm/remote.hpp"
#include "irm/report.hpp"
#include "irm/scoring.hpp"

namespace irm {

enum class ThresholdPolicyKind { kBestF1, kFixed, kCalibration };

struct ThresholdPolicy {
  ThresholdPolicyKind kind = ThresholdPolicyKind::kBestF1;
  double fixed_value = 0.0;
  std::filesystem::path calibration_path;
};

struct SampleSpec {
  std::size_t n_per_class = 0;
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::filesystem::path dataset_root;
  std::optional<std::filesystem::path> manifest;
  /// Exactly one record source.
  std::optional<std::filesystem::path> dump_path;
  std::optional<RemoteConfig> remote;
  std::vector<Metric> metrics;
  std::vector<Task> tasks;
  ThresholdPolicy threshold_policy;
  GeneralizationMode generalization = GeneralizationMode::kPooled;
  int bucket_width = 20;
  int bucket_max = 360;
  LengthBucket anchor{160, 180};
  std::optional<SampleSpec> sample;
  std::filesystem::path output_dir = "out";
  int workers = 1;
  bool strict = false;
  std::size_t histogram_bins = 50;

  /// Relative paths in the document resolve against `base_dir`.
  static RunConfig parse(std::string_view json_text, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& file);
};

/// One line of the scores file.
struct ScoreLine {
  std::string text_id;
  std::string subtask;  // "<task>/<subtask>", or "varying_length/<lo>-<hi>"
  Metric metric = Metric::kIrmSum;
  double score = 0.0;
  Label label = Label::kHuman;

  bool operator==(const ScoreLine&) const = default;
};

std::string to_json_line(const ScoreLine& line);
std::vector<ScoreLine> read_scores(const std::filesystem::path& file);
void write_scores(const std::filesystem::path& file, const std::vector<ScoreLine>& lines);

/// Splits "<task>/<rest>" into its parts.
std::pair<std::string, std::string> split_subtask_key(std::string_view key);

struct CalibrationEntry {
  double global_threshold = 0.0;
  std::map<LengthBucket, double> bucket_thresholds;
  std::optional<LinearFit> fit;  // residuals are not serialized
};

struct CalibrationFile {
  std::map<Metric, CalibrationEntry> metrics;

  std::string to_json() const;
  static CalibrationFile parse(std::string_view json_text);
  static CalibrationFile load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;
};

struct ScoreRunSummary {
  std::filesystem::path scores_path;
  std::size_t lines = 0;
  std::size_t sequences = 0;
};

/// Scores every selected example with every requested metric and writes
/// `<out>/scores.jsonl`, sorted by text id, subtask and metric. On any
/// metric failure the scores are written to `scores.jsonl.incomplete`,
/// failures to `errors.jsonl`, and the first failure is rethrown.
ScoreRunSummary cmd_score(const RunConfig& config);

/// Global and per-length-bucket best-F1 thresholds per metric, with the
/// threshold-vs-length linear fit; writes `<out>/calibration.json`.
CalibrationFile cmd_calibrate(const RunConfig& config, const std::filesystem::path& scores_path);

/// Task-grid evaluation; writes rows.csv, summary.csv, summary.md,
/// generalization.csv and length_task.csv under `<out>`.
EvalReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& scores_path,
                        const std::optional<CalibrationFile>& calibration = std::nullopt);

struct FigureDataSummary {
  std::vector<std::string> written;
  std::vector<std::string> notices;
};

/// Plot-ready CSVs under `<out>/figures`: score histograms per class,
/// train/test F1 across length buckets, and threshold-vs-length fit triples.
FigureDataSummary cmd_figure_data(const RunConfig& config, const std::filesystem::path& scores_path,
                                  const std::optional<CalibrationFile>& calibration = std::nullopt);

/// Loads the benchmark and compares split sizes with the published counts;
/// writes `<out>/dataset_stats.json`.
StatsReport cmd_validate_dataset(const RunConfig& config);

}  // namespace irm
