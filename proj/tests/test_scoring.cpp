#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "metric_fixtures.hpp"
#include "oracles.hpp"

using namespace irm;
using irm::testing::edit_records;
using irm::testing::make_sequence;
using irm::testing::random_sequence;

namespace {

double rel_tol(double v) { return 1e-12 * std::max(1.0, std::abs(v)); }

std::vector<TokenRecord> copy_records(const ScoredSequence& s) { return {s.records().begin(), s.records().end()}; }

ScoredSequence rebuild(const ScoredSequence& like, std::vector<TokenRecord> recs) {
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].position = static_cast<std::int64_t>(i);
  return ScoredSequence(like.text_id(), like.policy_model_id(), like.ref_model_id(), like.tokenizer_id(),
                        std::move(recs));
}

}  // namespace

TEST_CASE("closed-form fixtures") {
  for (const auto& f : irm::testing::run_metric_fixtures()) {
    INFO(f.name << ": " << f.detail);
    CHECK(f.pass);
  }
}

TEST_CASE("metric names round-trip") {
  for (auto m : kAllMetrics) CHECK(parse_metric(to_string(m)) == m);
  CHECK_FALSE(parse_metric("irm_sum").has_value());
}

TEST_CASE("IRM equals the difference of whole-sequence log-probabilities") {
  std::mt19937_64 rng(21);
  for (std::size_t len : {1u, 2u, 7u, 64u, 500u, 3000u}) {
    for (int k = 0; k < 5; ++k) {
      const auto s = random_sequence(rng, "s", len);
      const double want = irm::oracle::irm_sum_first(s);
      CHECK(std::abs(irm_score(s).value - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("self-concatenation doubles the sum and keeps the mean") {
  std::mt19937_64 rng(22);
  for (int k = 0; k < 20; ++k) {
    const auto s = random_sequence(rng, "s", 1 + k * 5);
    auto recs = copy_records(s);
    const auto again = copy_records(s);
    recs.insert(recs.end(), again.begin(), again.end());
    const auto twice = rebuild(s, std::move(recs));
    CHECK(std::abs(irm_score(twice).value - 2.0 * irm_score(s).value) <= rel_tol(irm_score(s).value));
    CHECK(std::abs(irm_score_mean(twice).value - irm_score_mean(s).value) <= rel_tol(irm_score_mean(s).value));
  }
}

TEST_CASE("inserting a token at the mean leaves LOGLIK unchanged") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> where(0, 1000);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_sequence(rng, "s", 1 + k);
    const double mean = loglik_score(s).value;
    auto recs = copy_records(s);
    TokenRecord extra = recs.front();
    extra.logprob_policy = mean;
    recs.insert(recs.begin() + static_cast<std::ptrdiff_t>(where(rng) % (recs.size() + 1)), extra);
    CHECK(std::abs(loglik_score(rebuild(s, std::move(recs))).value - mean) <= rel_tol(mean));
  }
}

TEST_CASE("raising a rank strictly lowers RANK") {
  std::mt19937_64 rng(24);
  std::uniform_int_distribution<std::int64_t> bump(1, 1000);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_sequence(rng, "s", 1 + k);
    const double before = rank_score(s).value;
    auto recs = copy_records(s);
    auto& r = recs[static_cast<std::size_t>(k) % recs.size()];
    *r.rank_policy += bump(rng);
    CHECK(rank_score(rebuild(s, std::move(recs))).value < before);
  }
}

TEST_CASE("LOGRANK agrees with a per-token loop") {
  std::mt19937_64 rng(25);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_sequence(rng, "s", 1 + k * 7);
    long double acc = 0;
    for (const auto& r : s.records()) acc += std::log(static_cast<long double>(*r.rank_policy));
    const double want = static_cast<double>(-acc / static_cast<long double>(s.length()));
    CHECK(std::abs(logrank_score(s).value - want) <= 1e-12);
  }
}

TEST_CASE("BINOCULARS agrees with a two-pass oracle") {
  std::mt19937_64 rng(26);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_sequence(rng, "s", 1 + k * 7);
    long double lp = 0, xent = 0;
    for (const auto& r : s.records()) lp += r.logprob_policy;
    for (const auto& r : s.records()) xent += *r.xent_policy_ref;
    const long double n = static_cast<long double>(s.length());
    const double want = static_cast<double>(-((-lp / n) / (xent / n)));
    CHECK(std::abs(binoculars_score(s).value - want) <= 1e-12);
  }
}

TEST_CASE("FASTDETECTGPT is invariant to a common shift") {
  std::mt19937_64 rng(27);
  std::uniform_real_distribution<double> shift(-5.0, 0.0);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_sequence(rng, "s", 1 + k * 3);
    const double c = shift(rng);
    const auto moved = edit_records(s, [&](TokenRecord& r) {
      r.logprob_policy += c;
      *r.exp_logprob_policy += c;
    });
    const double a = fastdetectgpt_score(s).value;
    CHECK(std::abs(fastdetectgpt_score(moved).value - a) <= 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("score_all ignores request order and duplicates") {
  std::mt19937_64 rng(28);
  const auto s = random_sequence(rng, "s", 30);
  std::vector<Metric> req(kAllMetrics.begin(), kAllMetrics.end());
  const auto canonical = score_all(s, req);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(req.begin(), req.end(), rng);
    auto with_dups = req;
    with_dups.push_back(req.front());
    CHECK(score_all(s, with_dups) == canonical);
  }
  const std::vector<Metric> none;
  CHECK_THROWS_AS(score_all(s, none), ValidationError);
}

TEST_CASE("capability errors name the metric") {
  const auto s = make_sequence({-1.0}, {-1.0});
  for (auto m : {Metric::kRank, Metric::kLogRank, Metric::kLrr, Metric::kBinoculars, Metric::kFastDetectGpt}) {
    CHECK_FALSE(supports(s.capabilities(), m));
    CHECK_THROWS_AS(compute_metric(m, s), CapabilityError);
  }
  CHECK(supports(s.capabilities(), Metric::kIrmMean));
}

TEST_CASE("scores are pure and oriented towards the policy") {
  std::mt19937_64 rng(29);
  irm::testing::SequenceOptions llm;
  llm.reward_shift = 1.0;
  irm::testing::SequenceOptions human;
  human.reward_shift = -1.0;
  for (int k = 0; k < 20; ++k) {
    const auto a = random_sequence(rng, "a", 40, llm);
    const auto b = random_sequence(rng, "b", 40, human);
    CHECK(irm_score(a).value > irm_score(b).value);
    CHECK(score_all(a, kAllMetrics) == score_all(a, kAllMetrics));
  }
  const auto d = irm_score(make_sequence({-1.0, -2.0}, {-1.5, -2.5}, "id-7"));
  CHECK(d.text_id == "id-7");
  CHECK(d.length_tokens == 2);
  CHECK(d.metric == Metric::kIrmSum);
}
