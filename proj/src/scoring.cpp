#include "irm/scoring.hpp"

#include <algorithm>
#include <cmath>

namespace irm {
namespace {

// Neumaier-compensated accumulator; keeps long sums of logprobs accurate to
// about one ulp of the result.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

DetectionScore make_score(Metric m, double value, const ScoredSequence& seq) {
  if (!std::isfinite(value)) {
    throw DegenerateInputError(std::string(to_string(m)) + " is not finite for '" + seq.text_id() + "'");
  }
  return DetectionScore{m, value, seq.length(), seq.text_id()};
}

void require_capability(bool ok, Metric m, std::string_view what, const ScoredSequence& seq) {
  if (!ok) {
    throw CapabilityError(std::string(to_string(m)) + " needs " + std::string(what) +
                          ", which sequence '" + seq.text_id() + "' does not carry");
  }
}

double sum_logprob_policy(const ScoredSequence& seq) {
  CompensatedSum s;
  for (const auto& r : seq.records()) s.add(r.logprob_policy);
  return s.value();
}

double sum_log_rank(const ScoredSequence& seq) {
  CompensatedSum s;
  for (const auto& r : seq.records()) s.add(std::log(static_cast<double>(*r.rank_policy)));
  return s.value();
}

}  // namespace

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kIrmSum: return "IRM_SUM";
    case Metric::kIrmMean: return "IRM_MEAN";
    case Metric::kLogLik: return "LOGLIK";
    case Metric::kRank: return "RANK";
    case Metric::kLogRank: return "LOGRANK";
    case Metric::kLrr: return "LRR";
    case Metric::kBinoculars: return "BINOCULARS";
    case Metric::kFastDetectGpt: return "FASTDETECTGPT";
  }
  return "UNKNOWN";
}

std::optional<Metric> parse_metric(std::string_view name) {
  for (auto m : kAllMetrics) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

DetectionScore irm_score(const ScoredSequence& seq) {
  CompensatedSum s;
  for (const auto& r : seq.records()) {
    s.add(r.logprob_policy);
    s.add(-r.logprob_ref);
  }
  return make_score(Metric::kIrmSum, s.value(), seq);
}

DetectionScore irm_score_mean(const ScoredSequence& seq) {
  const double total = irm_score(seq).value;
  return make_score(Metric::kIrmMean, total / static_cast<double>(seq.length()), seq);
}

DetectionScore loglik_score(const ScoredSequence& seq) {
  return make_score(Metric::kLogLik, sum_logprob_policy(seq) / static_cast<double>(seq.length()), seq);
}

DetectionScore rank_score(const ScoredSequence& seq) {
  require_capability(seq.capabilities().has_rank, Metric::kRank, "rank_policy", seq);
  CompensatedSum s;
  for (const auto& r : seq.records()) s.add(static_cast<double>(*r.rank_policy));
  return make_score(Metric::kRank, -s.value() / static_cast<double>(seq.length()), seq);
}

DetectionScore logrank_score(const ScoredSequence& seq) {
  require_capability(seq.capabilities().has_rank, Metric::kLogRank, "rank_policy", seq);
  return make_score(Metric::kLogRank, -sum_log_rank(seq) / static_cast<double>(seq.length()), seq);
}

DetectionScore lrr_score(const ScoredSequence& seq) {
  require_capability(seq.capabilities().has_rank, Metric::kLrr, "rank_policy", seq);
  const double denom = sum_log_rank(seq);
  if (!(denom > 0.0)) {
    throw DegenerateInputError("LRR undefined for '" + seq.text_id() +
                               "': sum of log ranks is 0 (every token has rank 1)");
  }
  return make_score(Metric::kLrr, -sum_logprob_policy(seq) / denom, seq);
}

DetectionScore binoculars_score(const ScoredSequence& seq) {
  require_capability(seq.capabilities().has_cross_entropy, Metric::kBinoculars, "xent_policy_ref",
                     seq);
  const double n = static_cast<double>(seq.length());
  CompensatedSum xent;
  for (const auto& r : seq.records()) xent.add(*r.xent_policy_ref);
  const double mean_xent = xent.value() / n;
  if (!(mean_xent > 0.0)) {
    throw DegenerateInputError("BINOCULARS undefined for '" + seq.text_id() +
                               "': total cross-entropy is 0");
  }
  const double log_ppl = -sum_logprob_policy(seq) / n;
  return make_score(Metric::kBinoculars, -(log_ppl / mean_xent), seq);
}

DetectionScore fastdetectgpt_score(const ScoredSequence& seq) {
  require_capability(seq.capabilities().has_curvature_moments, Metric::kFastDetectGpt,
                     "exp_logprob_policy and var_logprob_policy", seq);
  CompensatedSum variance;
  for (const auto& r : seq.records()) variance.add(*r.var_logprob_policy);
  if (!(variance.value() > 0.0)) {
    throw DegenerateInputError("FASTDETECTGPT undefined for '" + seq.text_id() +
                               "': total variance is 0");
  }
  // sum(logp) - sum(E[logp]) accumulated as one sum.
  CompensatedSum gap;
  for (const auto& r : seq.records()) {
    gap.add(r.logprob_policy);
    gap.add(-*r.exp_logprob_policy);
  }
  return make_score(Metric::kFastDetectGpt, gap.value() / std::sqrt(variance.value()), seq);
}

DetectionScore compute_metric(Metric m, const ScoredSequence& seq) {
  switch (m) {
    case Metric::kIrmSum: return irm_score(seq);
    case Metric::kIrmMean: return irm_score_mean(seq);
    case Metric::kLogLik: return loglik_score(seq);
    case Metric::kRank: return rank_score(seq);
    case Metric::kLogRank: return logrank_score(seq);
    case Metric::kLrr: return lrr_score(seq);
    case Metric::kBinoculars: return binoculars_score(seq);
    case Metric::kFastDetectGpt: return fastdetectgpt_score(seq);
  }
  throw ValidationError("unknown metric");
}

bool supports(const ProviderCapabilities& caps, Metric m) {
  switch (m) {
    case Metric::kIrmSum:
    case Metric::kIrmMean:
    case Metric::kLogLik: return caps.has_chosen_logprob;
    case Metric::kRank:
    case Metric::kLogRank:
    case Metric::kLrr: return caps.has_rank;
    case Metric::kBinoculars: return caps.has_cross_entropy;
    case Metric::kFastDetectGpt: return caps.has_curvature_moments;
  }
  return false;
}

std::vector<MetricOutcome> score_all(const ScoredSequence& seq, std::span<const Metric> requested) {
  if (requested.empty()) throw ValidationError("score_all: no metrics requested");
  std::vector<MetricOutcome> out;
  for (auto m : kAllMetrics) {
    if (std::find(requested.begin(), requested.end(), m) == requested.end()) continue;
    MetricOutcome o;
    o.metric = m;
    try {
      o.score = compute_metric(m, seq);
    } catch (const Error& e) {
      o.error_kind = e.kind();
      o.error_message = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace irm
