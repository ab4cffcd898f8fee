#include "irm/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace irm {
namespace {

struct Point {
  double score;
  bool llm;
};

std::vector<Point> sorted_points(std::span<const LabeledScore> scores) {
  std::vector<Point> pts;
  pts.reserve(scores.size());
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw ValidationError("non-finite score for '" + s.text_id + "'");
    pts.push_back({s.score, s.label == Label::kLlm});
  }
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.score < b.score; });
  return pts;
}

struct TieGroup {
  double value;
  std::uint64_t n_human;
  std::uint64_t n_llm;
};

std::vector<TieGroup> tie_groups(const std::vector<Point>& pts) {
  std::vector<TieGroup> groups;
  for (const auto& p : pts) {
    if (groups.empty() || groups.back().value != p.score) groups.push_back({p.score, 0, 0});
    (p.llm ? groups.back().n_llm : groups.back().n_human) += 1;
  }
  return groups;
}

void require_both_classes(const ClassCounts& c, std::string_view what) {
  if (c.n_human == 0 || c.n_llm == 0) {
    throw DegenerateInputError(std::string(what) + " undefined: needs both HUMAN and LLM examples (got " +
                               std::to_string(c.n_human) + " human, " + std::to_string(c.n_llm) +
                               " LLM)");
  }
}

// a/b > c/d for non-negative fractions with positive denominators.
bool fraction_greater(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return a * d > c * b;
}

bool has_both_classes(std::span<const LabeledScore> scores) {
  const auto c = count_classes(scores);
  return c.n_human > 0 && c.n_llm > 0;
}

}  // namespace

std::string_view to_string(Label l) { return l == Label::kLlm ? "LLM" : "HUMAN"; }

std::optional<Label> parse_label(std::string_view name) {
  if (name == "LLM") return Label::kLlm;
  if (name == "HUMAN") return Label::kHuman;
  return std::nullopt;
}

ClassCounts count_classes(std::span<const LabeledScore> scores) {
  ClassCounts c;
  for (const auto& s : scores) (s.label == Label::kLlm ? c.n_llm : c.n_human) += 1;
  return c;
}

double auroc(std::span<const LabeledScore> scores) {
  const auto counts = count_classes(scores);
  require_both_classes(counts, "AUROC");
  const auto groups = tie_groups(sorted_points(scores));

  // Twice the Mann-Whitney U statistic, kept integral so the result depends
  // only on the ordering of the scores.
  std::uint64_t twice_wins = 0;
  std::uint64_t humans_below = 0;
  for (const auto& g : groups) {
    twice_wins += 2 * g.n_llm * humans_below + g.n_llm * g.n_human;
    humans_below += g.n_human;
  }
  const long double pairs = static_cast<long double>(counts.n_llm) * counts.n_human;
  return static_cast<double>(static_cast<long double>(twice_wins) / (2.0L * pairs));
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;
  return static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
}

Confusion confusion_at(std::span<const LabeledScore> scores, double threshold) {
  Confusion c;
  for (const auto& s : scores) {
    const bool predicted_llm = s.score >= threshold;
    if (s.label == Label::kLlm) {
      (predicted_llm ? c.tp : c.fn) += 1;
    } else {
      (predicted_llm ? c.fp : c.tn) += 1;
    }
  }
  if (c.tp + c.fn == 0) throw DegenerateInputError("confusion_at: no LLM examples");
  c.precision = (c.tp + c.fp) == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  c.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  c.f1 = f1_from_counts(c.tp, c.fp, c.fn);
  return c;
}

Confusion confusion_at(std::span<const LabeledScore> scores, const Threshold& t) {
  return confusion_at(scores, t.value);
}

BestF1 best_f1_threshold(std::span<const LabeledScore> scores) {
  const auto counts = count_classes(scores);
  require_both_classes(counts, "best-F1 threshold");
  const auto groups = tie_groups(sorted_points(scores));

  const double lo = groups.front().value;
  const double hi = groups.back().value;
  const double margin = hi > lo ? 0.5 * (hi - lo) : 1.0;

  // Candidate j predicts groups j.. as LLM; candidate groups.size() predicts none.
  std::uint64_t tp = counts.n_llm;
  std::uint64_t fp = counts.n_human;
  const std::uint64_t n_llm = counts.n_llm;

  std::size_t best_j = 0;
  std::uint64_t best_num = 2 * tp;
  std::uint64_t best_den = 2 * tp + fp;
  for (std::size_t j = 1; j <= groups.size(); ++j) {
    tp -= groups[j - 1].n_llm;
    fp -= groups[j - 1].n_human;
    const std::uint64_t num = 2 * tp;
    const std::uint64_t den = 2 * tp + fp + (n_llm - tp);
    if (fraction_greater(num, den, best_num, best_den)) {
      best_j = j;
      best_num = num;
      best_den = den;
    }
  }

  double threshold = 0.0;
  if (best_j == 0) {
    threshold = lo - margin;
  } else if (best_j == groups.size()) {
    threshold = hi + margin;
  } else {
    const double a = groups[best_j - 1].value;
    const double b = groups[best_j].value;
    threshold = a + 0.5 * (b - a);
    // Adjacent doubles: the midpoint must still separate a from b.
    if (!(threshold > a && threshold <= b)) threshold = b;
  }
  return BestF1{threshold, confusion_at(scores, threshold).f1};
}

GeneralizationResult generalization_eval(const std::map<std::string, std::vector<LabeledScore>>& subtasks,
                                         GeneralizationMode mode) {
  if (subtasks.size() < 2) {
    throw ValidationError("generalization_eval needs at least 2 subtasks, got " +
                          std::to_string(subtasks.size()));
  }
  for (const auto& [name, scores] : subtasks) {
    if (!has_both_classes(scores)) {
      throw DegenerateInputError("generalization_eval: subtask '" + name + "' lacks a class");
    }
  }

  std::map<std::string, double> own_thresholds;
  if (mode == GeneralizationMode::kAveragedThresholds) {
    for (const auto& [name, scores] : subtasks) own_thresholds[name] = best_f1_threshold(scores).threshold;
  }

  GeneralizationResult out;
  long double total = 0.0L;
  for (const auto& [name, scores] : subtasks) {
    double threshold = 0.0;
    if (mode == GeneralizationMode::kPooled) {
      std::vector<LabeledScore> pool;
      for (const auto& [other, other_scores] : subtasks) {
        if (other != name) pool.insert(pool.end(), other_scores.begin(), other_scores.end());
      }
      threshold = best_f1_threshold(pool).threshold;
    } else {
      double sum = 0.0;
      for (const auto& [other, t] : own_thresholds) {
        if (other != name) sum += t;
      }
      threshold = sum / static_cast<double>(subtasks.size() - 1);
    }
    const double f1 = confusion_at(scores, threshold).f1;
    out.per_subtask.push_back({name, threshold, f1});
    total += f1;
  }
  out.mean_f1 = static_cast<double>(total / static_cast<long double>(out.per_subtask.size()));
  return out;
}

std::string LengthBucket::label() const { return std::to_string(lo) + "-" + std::to_string(hi); }

std::optional<LengthBucket> parse_length_bucket(std::string_view label) {
  const auto dash = label.find('-');
  if (dash == std::string_view::npos || dash == 0) return std::nullopt;
  LengthBucket b;
  auto r1 = std::from_chars(label.data(), label.data() + dash, b.lo);
  auto r2 = std::from_chars(label.data() + dash + 1, label.data() + label.size(), b.hi);
  if (r1.ec != std::errc() || r1.ptr != label.data() + dash) return std::nullopt;
  if (r2.ec != std::errc() || r2.ptr != label.data() + label.size()) return std::nullopt;
  if (b.hi <= b.lo) return std::nullopt;
  return b;
}

LengthTaskResult length_task_eval(const BucketedScores& buckets, const LengthBucket& anchor) {
  const auto anchor_it = buckets.find(anchor);
  if (anchor_it == buckets.end()) {
    throw ValidationError("length task: anchor bucket " + anchor.label() + " missing");
  }
  if (!has_both_classes(anchor_it->second)) {
    throw DegenerateInputError("length task: anchor bucket " + anchor.label() + " lacks a class");
  }
  const auto& anchor_scores = anchor_it->second;
  const double anchor_threshold = best_f1_threshold(anchor_scores).threshold;

  LengthTaskResult out;
  for (const auto& [bucket, scores] : buckets) {
    if (bucket == anchor) continue;
    if (!has_both_classes(scores)) {
      out.skipped.push_back(bucket);
      continue;
    }
    out.train_per_bucket[bucket] = confusion_at(scores, anchor_threshold).f1;
    out.test_per_bucket[bucket] = confusion_at(anchor_scores, best_f1_threshold(scores).threshold).f1;
  }
  if (out.train_per_bucket.empty()) {
    throw DegenerateInputError("length task: no non-anchor bucket has both classes");
  }
  // Long double keeps the mean of identical values exact.
  auto mean = [](const std::map<LengthBucket, double>& m) {
    long double s = 0.0L;
    for (const auto& [_, v] : m) s += v;
    return static_cast<double>(s / static_cast<long double>(m.size()));
  };
  out.train_f1 = mean(out.train_per_bucket);
  out.test_f1 = mean(out.test_per_bucket);
  return out;
}

LinearFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("fit_line: x and y differ in length");
  if (xs.size() < 2) throw ValidationError("fit_line: needs at least 2 points");
  const double n = static_cast<double>(xs.size());
  const double mean_x = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double mean_y = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mean_x) * (xs[i] - mean_x);
    sxy += (xs[i] - mean_x) * (ys[i] - mean_y);
  }
  if (!(sxx > 0.0)) throw DegenerateInputError("fit_line: all x values are equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = mean_y - fit.slope * mean_x;
  fit.residuals.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    fit.residuals.push_back(ys[i] - (fit.slope * xs[i] + fit.intercept));
  }
  return fit;
}

ThresholdLengthFit threshold_length_fit(const BucketedScores& buckets) {
  ThresholdLengthFit out;
  std::vector<double> mids;
  for (const auto& [bucket, scores] : buckets) {
    if (!has_both_classes(scores)) continue;
    out.buckets.push_back(bucket);
    out.thresholds.push_back(best_f1_threshold(scores).threshold);
    mids.push_back(bucket.midpoint());
  }
  if (out.buckets.size() < 2) {
    throw ValidationError("threshold_length_fit needs at least 2 buckets with both classes, got " +
                          std::to_string(out.buckets.size()));
  }
  out.fit = fit_line(mids, out.thresholds);
  return out;
}

}  // namespace irm
