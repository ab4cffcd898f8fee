#pragma once

// Threshold-free and threshold-based detection metrics over labeled scores,
// plus the cross-subtask and text-length protocols built on them.
//
// Conventions: LLM-generated is the positive class, and a text is predicted
// LLM-generated iff score >= threshold.

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irm/scoring.hpp"

namespace irm {

enum class Label { kHuman, kLlm };

std::string_view to_string(Label l);
std::optional<Label> parse_label(std::string_view name);

struct LabeledScore {
  double score = 0.0;
  Label label = Label::kHuman;
  std::string text_id;
  std::string subtask;

  bool operator==(const LabeledScore&) const = default;
};

struct Threshold {
  double value = 0.0;
  std::string source_subtask;
  Metric metric = Metric::kIrmSum;

  bool operator==(const Threshold&) const = default;
};

struct ClassCounts {
  std::size_t n_human = 0;
  std::size_t n_llm = 0;
};

ClassCounts count_classes(std::span<const LabeledScore> scores);

/// Probability that a random LLM text outscores a random human text, with
/// half credit for ties. Computed from sorted tie groups in O(n log n).
/// Throws DegenerateInputError ("AUROC undefined") on single-class input.
double auroc(std::span<const LabeledScore> scores);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// F1 from confusion counts, 2TP / (2TP + FP + FN); 0 when TP = 0.
double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Confusion matrix and rates at a threshold. Precision is 0 when nothing is
/// predicted positive. Requires at least one LLM example.
Confusion confusion_at(std::span<const LabeledScore> scores, double threshold);
Confusion confusion_at(std::span<const LabeledScore> scores, const Threshold& t);

struct BestF1 {
  double threshold = 0.0;
  double f1 = 0.0;
};

/// Threshold maximizing F1 over the midpoints of consecutive distinct scores
/// plus one point below the minimum and one above the maximum. Ties go to the
/// smallest threshold. The margin outside the score range is half the score
/// spread (1 when all scores are equal), so the search commutes with positive
/// affine maps of the scores.
BestF1 best_f1_threshold(std::span<const LabeledScore> scores);

/// How "other sub-tasks" supply a threshold in the generalization protocol.
enum class GeneralizationMode {
  /// Best-F1 threshold of the pooled scores of all other subtasks.
  kPooled,
  /// Mean of the other subtasks' individual best-F1 thresholds.
  kAveragedThresholds,
};

struct SubtaskF1 {
  std::string subtask;
  double threshold = 0.0;
  double f1 = 0.0;
};

struct GeneralizationResult {
  std::vector<SubtaskF1> per_subtask;  // sorted by subtask name
  double mean_f1 = 0.0;
};

/// Evaluates each subtask with a threshold calibrated on the other subtasks.
GeneralizationResult generalization_eval(const std::map<std::string, std::vector<LabeledScore>>& subtasks,
                                         GeneralizationMode mode = GeneralizationMode::kPooled);

/// Half-open word-count interval [lo, hi).
struct LengthBucket {
  int lo = 0;
  int hi = 0;

  double midpoint() const { return 0.5 * (lo + hi); }
  std::string label() const;  // "160-180"
  auto operator<=>(const LengthBucket&) const = default;
};

std::optional<LengthBucket> parse_length_bucket(std::string_view label);

using BucketedScores = std::map<LengthBucket, std::vector<LabeledScore>>;

struct LengthTaskResult {
  /// Mean F1 over non-anchor buckets under the anchor's best threshold.
  double train_f1 = 0.0;
  /// Mean F1 on the anchor under each non-anchor bucket's best threshold.
  double test_f1 = 0.0;
  std::map<LengthBucket, double> train_per_bucket;
  std::map<LengthBucket, double> test_per_bucket;
  /// Buckets left out because they lack one of the two classes.
  std::vector<LengthBucket> skipped;
};

LengthTaskResult length_task_eval(const BucketedScores& buckets, const LengthBucket& anchor);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> residuals;  // observed - fitted, per point
};

/// Ordinary least squares y = slope * x + intercept. Needs >= 2 distinct x.
LinearFit fit_line(std::span<const double> xs, std::span<const double> ys);

struct ThresholdLengthFit {
  std::vector<LengthBucket> buckets;
  std::vector<double> thresholds;
  LinearFit fit;
};

/// Fits best-F1 threshold against bucket word midpoint. Buckets lacking a
/// class are ignored; fewer than 2 usable buckets is an error.
ThresholdLengthFit threshold_length_fit(const BucketedScores& buckets);

}  // namespace irm
