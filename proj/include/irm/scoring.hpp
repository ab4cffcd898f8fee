#pragma once

// Detection metrics over a ScoredSequence. Every metric is oriented so that a
// larger value means "more likely LLM-generated".

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irm/error.hpp"
#include "irm/records.hpp"

namespace irm {

enum class Metric {
  kIrmSum,
  kIrmMean,
  kLogLik,
  kRank,
  kLogRank,
  kLrr,
  kBinoculars,
  kFastDetectGpt,
};

inline constexpr std::array<Metric, 8> kAllMetrics = {
    Metric::kIrmSum, Metric::kIrmMean,   Metric::kLogLik,     Metric::kRank,
    Metric::kLogRank, Metric::kLrr,      Metric::kBinoculars, Metric::kFastDetectGpt};

/// Canonical names: IRM_SUM, IRM_MEAN, LOGLIK, RANK, LOGRANK, LRR,
/// BINOCULARS, FASTDETECTGPT.
std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

struct DetectionScore {
  Metric metric = Metric::kIrmSum;
  double value = 0.0;
  std::size_t length_tokens = 0;
  std::string text_id;

  bool operator==(const DetectionScore&) const = default;
};

/// Implicit reward: sum over tokens of log pi_policy - log pi_ref.
DetectionScore irm_score(const ScoredSequence& seq);
/// Implicit reward averaged over tokens.
DetectionScore irm_score_mean(const ScoredSequence& seq);
/// Mean log-likelihood under the policy model.
DetectionScore loglik_score(const ScoredSequence& seq);
/// Negated mean token rank under the policy model.
DetectionScore rank_score(const ScoredSequence& seq);
/// Negated mean log-rank under the policy model.
DetectionScore logrank_score(const ScoredSequence& seq);
/// Log-likelihood to log-rank ratio: sum(-logp) / sum(log rank).
DetectionScore lrr_score(const ScoredSequence& seq);
/// Negated ratio of log-perplexity to cross-perplexity.
DetectionScore binoculars_score(const ScoredSequence& seq);
/// Analytic conditional probability curvature with the policy model as both
/// scoring and sampling model.
DetectionScore fastdetectgpt_score(const ScoredSequence& seq);

DetectionScore compute_metric(Metric m, const ScoredSequence& seq);

/// True when the sequence carries every field metric `m` reads.
bool supports(const ProviderCapabilities& caps, Metric m);

/// Result of one requested metric: either a score or a structured error.
struct MetricOutcome {
  Metric metric = Metric::kIrmSum;
  std::optional<DetectionScore> score;
  std::optional<ErrorKind> error_kind;
  std::string error_message;

  bool ok() const noexcept { return score.has_value(); }
  bool operator==(const MetricOutcome&) const = default;
};

/// Computes every requested metric. Outcomes come back in canonical metric
/// order with duplicates removed, so the result does not depend on the order
/// of `requested`. Unsatisfiable metrics yield an error outcome.
std::vector<MetricOutcome> score_all(const ScoredSequence& seq, std::span<const Metric> requested);

}  // namespace irm
