#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "irm/error.hpp"
#include "irm/records.hpp"
#include "irm/scoring.hpp"

using namespace irm;
using irm::testing::make_sequence;
using irm::testing::random_sequence;

namespace {

const char* kThreeRecords =
    R"({"text_id":"a","policy_model_id":"p","ref_model_id":"r","tokenizer_id":"tok","records":[)"
    R"({"position":0,"token_id":5,"token_text":"He","logprob_policy":-1.5,"logprob_ref":-2.0},)"
    R"({"position":1,"token_id":6,"token_text":"llo","logprob_policy":-0.25,"logprob_ref":-0.5},)"
    R"({"position":2,"token_id":7,"token_text":"!","logprob_policy":-3.0,"logprob_ref":-3.0}]})";

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

ScoredSequence chain_step(const std::vector<double>& lower, const std::vector<double>& upper,
                          const std::string& lower_model, const std::string& upper_model) {
  return make_sequence(upper, lower, "chain", upper_model, lower_model);
}

}  // namespace

TEST_CASE("empty dump is rejected") {
  std::istringstream in("");
  CHECK_THROWS_WITH_AS(load_dump(in), "no sequences", ParseError);
  std::istringstream blank("\n\n");
  CHECK_THROWS_AS(load_dump(blank), ParseError);
}

TEST_CASE("one line with three records") {
  std::istringstream in(std::string(kThreeRecords) + "\n");
  const auto seqs = load_dump(in);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].length() == 3);
  CHECK(seqs[0].text_id() == "a");
  CHECK(seqs[0].records()[1].token_text == "llo");
  CHECK(seqs[0].records()[1].logprob_ref == -0.5);
  CHECK_FALSE(seqs[0].capabilities().has_rank);
}

TEST_CASE("write then load reproduces the bytes") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::bernoulli_distribution coin(0.5);
  std::vector<ScoredSequence> seqs;
  for (int i = 0; i < 100; ++i) {
    irm::testing::SequenceOptions opt;
    opt.ranks = coin(rng);
    opt.xent = coin(rng);
    opt.moments = coin(rng);
    seqs.push_back(random_sequence(rng, "s" + std::to_string(i), len(rng), opt));
  }
  std::ostringstream first;
  write_dump(first, seqs);
  std::istringstream in(first.str());
  const auto loaded = load_dump(in);
  CHECK(loaded == seqs);
  std::ostringstream second;
  write_dump(second, loaded);
  CHECK(second.str() == first.str());
}

TEST_CASE("malformed line reports its line number") {
  std::istringstream in(std::string(kThreeRecords) + "\n{not json\n");
  try {
    load_dump(in);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("record invariants are enforced") {
  SUBCASE("mixed capability") {
    auto line = replace_once(kThreeRecords, R"("logprob_ref":-2.0})", R"("logprob_ref":-2.0,"rank_policy":1})");
    CHECK_THROWS_AS(parse_dump_line(line, 1), ValidationError);
  }
  SUBCASE("positive logprob") {
    auto line = replace_once(kThreeRecords, R"("logprob_policy":-1.5)", R"("logprob_policy":0.5)");
    CHECK_THROWS_AS(parse_dump_line(line, 1), ValidationError);
  }
  SUBCASE("gap in positions") {
    auto line = replace_once(kThreeRecords, R"("position":2)", R"("position":3)");
    CHECK_THROWS_AS(parse_dump_line(line, 1), ValidationError);
  }
  SUBCASE("rank below one") {
    std::vector<TokenRecord> recs(1);
    recs[0].logprob_policy = -1.0;
    recs[0].logprob_ref = -1.0;
    recs[0].rank_policy = 0;
    CHECK_THROWS_AS(ScoredSequence("x", "p", "r", "tok", recs), ValidationError);
  }
  SUBCASE("no records") {
    CHECK_THROWS_AS(ScoredSequence("x", "p", "r", "tok", {}), ValidationError);
  }
  SUBCASE("tokenizer disagreement") {
    auto line = replace_once(kThreeRecords, R"("tokenizer_id":"tok")",
                             R"("tokenizer_id":{"policy":"tok-a","ref":"tok-b"})");
    CHECK_THROWS_AS(parse_dump_line(line, 1), ValidationError);
    auto same = replace_once(kThreeRecords, R"("tokenizer_id":"tok")",
                             R"("tokenizer_id":{"policy":"tok","ref":"tok"})");
    CHECK(parse_dump_line(same, 1).tokenizer_id() == "tok");
  }
  SUBCASE("curvature needs both moments") {
    auto line = replace_once(kThreeRecords, R"("logprob_ref":-2.0})", R"("logprob_ref":-2.0,"var_logprob_policy":1})");
    line = replace_once(line, R"("logprob_ref":-0.5})", R"("logprob_ref":-0.5,"var_logprob_policy":1})");
    line = replace_once(line, R"("logprob_ref":-3.0})", R"("logprob_ref":-3.0,"var_logprob_policy":1})");
    CHECK_FALSE(parse_dump_line(line, 1).capabilities().has_curvature_moments);
  }
}

TEST_CASE("unknown keys warn, or fail in strict mode") {
  const auto line = replace_once(kThreeRecords, R"("text_id":"a",)", R"("text_id":"a","extra":1,)");
  std::vector<std::string> warnings;
  DumpOptions lenient;
  lenient.warn = [&](std::string_view w) { warnings.emplace_back(w); };
  CHECK(parse_dump_line(line, 4, lenient).length() == 3);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("extra") != std::string::npos);

  DumpOptions strict;
  strict.strict = true;
  CHECK_THROWS_AS(parse_dump_line(line, 4, strict), ParseError);
}

TEST_CASE("composed chain telescopes") {
  // Dyadic values keep every difference exact.
  const std::vector<double> a{-1.0, -2.5, -0.75, -4.0};
  const std::vector<double> b{-0.5, -2.0, -1.25, -3.0};
  const std::vector<double> c{-0.25, -1.0, -0.5, -2.0};
  const auto ab = chain_step(a, b, "A", "B");
  const auto bc = chain_step(b, c, "B", "C");
  const auto ac = chain_compose(ab, bc);
  CHECK(ac.policy_model_id() == "C");
  CHECK(ac.ref_model_id() == "A");
  CHECK(irm_score(ac).value == irm_score(ab).value + irm_score(bc).value);

  SUBCASE("inverse chain is zero") {
    const auto ba = chain_step(b, a, "B", "A");
    CHECK(irm_score(chain_compose(ab, ba)).value == 0.0);
  }
}

TEST_CASE("three-link chains associate") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lp(-9.0, -0.01);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial) * 3;
    std::vector<std::vector<double>> m(4, std::vector<double>(n));
    for (auto& v : m) {
      for (auto& x : v) x = lp(rng);
    }
    const auto s01 = chain_step(m[0], m[1], "M0", "M1");
    const auto s12 = chain_step(m[1], m[2], "M1", "M2");
    const auto s23 = chain_step(m[2], m[3], "M2", "M3");
    const auto left = chain_compose(chain_compose(s01, s12), s23);
    const auto right = chain_compose(s01, chain_compose(s12, s23));
    CHECK(std::abs(irm_score(left).value - irm_score(right).value) <= 1e-12);
  }
}

TEST_CASE("chain composition checks its inputs") {
  const std::vector<double> a{-1.0, -2.0};
  const std::vector<double> b{-1.5, -2.5};
  const auto ab = chain_step(a, b, "A", "B");
  CHECK_THROWS_AS(chain_compose(ab, chain_step(b, a, "X", "A")), ValidationError);
  CHECK_THROWS_AS(chain_compose(ab, chain_step({-1.0}, {-1.0}, "B", "C")), ValidationError);
  const auto other_text = make_sequence(a, b, "other", "C", "B");
  CHECK_THROWS_AS(chain_compose(ab, other_text), ValidationError);
  const auto retokenized = irm::testing::edit_records(chain_step(b, a, "B", "C"), [](TokenRecord& r) {
    r.token_id += 1;
  });
  CHECK_THROWS_AS(chain_compose(ab, retokenized), ValidationError);
}

TEST_CASE("dump files round-trip through the filesystem") {
  irm::testing::TempDir dir;
  std::mt19937_64 rng(3);
  std::vector<ScoredSequence> seqs{random_sequence(rng, "x", 4), random_sequence(rng, "y", 2)};
  write_dump(dir / "d.jsonl", seqs);
  CHECK(load_dump(dir / "d.jsonl") == seqs);
  CHECK_THROWS_AS(load_dump(dir / "missing.jsonl"), ParseError);
}
