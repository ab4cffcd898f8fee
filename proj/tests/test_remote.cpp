#include <chrono>

#include "doctest.h"
#include "irm/error.hpp"
#include "irm/remote.hpp"
#include "mock_completions.hpp"

using namespace irm;
using irm::testing::MockCompletions;

namespace {

RemoteConfig config_for(const MockCompletions& server, const std::string& policy = "policy",
                        const std::string& ref = "ref") {
  RemoteConfig c;
  c.policy_url = server.url(policy);
  c.ref_url = server.url(ref);
  c.policy_model = policy + "-model";
  c.ref_model = ref + "-model";
  c.tokenizer_id = "mock-tok";
  c.initial_backoff = std::chrono::milliseconds(1);
  c.max_retries = 3;
  c.timeout = std::chrono::seconds(10);
  return c;
}

const std::string kText = "The quick brown fox jumps over the lazy dog";

}  // namespace

TEST_CASE("one record per prompt token") {
  MockCompletions server;
  const auto seq = fetch_remote("t1", kText, config_for(server));
  CHECK(seq.length() == 9);
  CHECK(seq.text_id() == "t1");
  CHECK(seq.policy_model_id() == "policy-model");
  CHECK(seq.ref_model_id() == "ref-model");
  CHECK(seq.tokenizer_id() == "mock-tok");
  CHECK(seq.capabilities() == remote_capabilities());
  CHECK(seq.records()[1].token_id == MockCompletions::token_id(" quick"));
  CHECK(seq.records()[1].logprob_policy == MockCompletions::logprob("policy-model", " quick", 1));
  CHECK(seq.records()[1].logprob_ref == MockCompletions::logprob("ref-model", " quick", 1));
}

TEST_CASE("repeated requests are identical") {
  MockCompletions server;
  const RemoteScorer scorer(config_for(server));
  CHECK(scorer.fetch("a", kText) == scorer.fetch("a", kText));
}

TEST_CASE("same endpoint on both sides gives equal logprobs") {
  MockCompletions server;
  auto c = config_for(server, "same", "same");
  c.ref_model = c.policy_model;
  const auto seq = fetch_remote("a", kText, c);
  for (const auto& r : seq.records()) CHECK(r.logprob_policy == r.logprob_ref);
}

TEST_CASE("tokenizer disagreement is reported") {
  MockCompletions server;
  server.behaviour("ref").char_tokens = true;
  CHECK_THROWS_AS(fetch_remote("a", kText, config_for(server)), TokenizerMismatchError);
  // Same count, different ids.
  server.behaviour("ref").char_tokens = false;
  server.behaviour("ref").id_offset = 1;
  CHECK_THROWS_WITH_AS(fetch_remote("b", kText, config_for(server)), doctest::Contains("position 0"),
                       TokenizerMismatchError);
}

TEST_CASE("transient failures are retried") {
  MockCompletions server;
  server.behaviour("policy").fail_first = 2;
  const auto seq = fetch_remote("a", kText, config_for(server));
  CHECK(seq.length() == 9);
  CHECK(server.requests("policy") == 3);
}

TEST_CASE("persistent failures become transport errors") {
  MockCompletions server;
  server.behaviour("policy").fail_first = 100;
  auto c = config_for(server);
  c.max_retries = 2;
  CHECK_THROWS_WITH_AS(fetch_remote("a", kText, c), doctest::Contains("3 attempts"), TransportError);
  CHECK(server.requests("policy") == 3);
}

TEST_CASE("client errors are not retried") {
  MockCompletions server;
  server.behaviour("policy").fail_first = 100;
  server.behaviour("policy").fail_status = 400;
  CHECK_THROWS_AS(fetch_remote("a", kText, config_for(server)), TransportError);
  CHECK(server.requests("policy") == 1);
}

TEST_CASE("unreachable endpoint") {
  RemoteConfig c;
  c.policy_url = "http://127.0.0.1:1/v1/completions";
  c.ref_url = c.policy_url;
  c.policy_model = c.ref_model = "m";
  c.tokenizer_id = "t";
  c.max_retries = 1;
  c.initial_backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::seconds(2);
  CHECK_THROWS_AS(fetch_remote("a", "x", c), TransportError);
}

TEST_CASE("missing logprobs is a capability error") {
  MockCompletions server;
  server.behaviour("policy").no_logprobs = true;
  CHECK_THROWS_AS(fetch_remote("a", kText, config_for(server)), CapabilityError);
}

TEST_CASE("generated continuation is dropped") {
  MockCompletions server;
  server.behaviour("policy").continuation = true;
  server.behaviour("ref").continuation = true;
  CHECK(fetch_remote("a", kText, config_for(server)).length() == 9);
}

TEST_CASE("token ids from prompt_token_ids") {
  MockCompletions server;
  server.behaviour("policy").ids_in_text = false;
  server.behaviour("ref").ids_in_text = false;
  const auto seq = fetch_remote("a", kText, config_for(server));
  CHECK(seq.records()[0].token_id == MockCompletions::token_id("The"));
  CHECK(seq.records()[0].token_text == "The");
}

TEST_CASE("in-flight requests stay bounded") {
  MockCompletions server;
  server.behaviour("policy").delay = std::chrono::milliseconds(40);
  server.behaviour("ref").delay = std::chrono::milliseconds(5);
  auto c = config_for(server);
  c.max_in_flight = 2;
  const RemoteScorer scorer(c);
  std::vector<TextInput> inputs;
  for (int i = 0; i < 12; ++i) inputs.push_back({"t" + std::to_string(i), kText + " " + std::to_string(i)});
  const auto seqs = scorer.fetch_all(inputs, 6);
  REQUIRE(seqs.size() == inputs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) CHECK(seqs[i].text_id() == inputs[i].text_id);
  CHECK(server.max_in_flight("policy") <= 2);
  CHECK(server.max_in_flight("policy") >= 1);
}

TEST_CASE("fetch_all rethrows the earliest failure") {
  MockCompletions server;
  server.behaviour("ref").char_tokens = true;
  const RemoteScorer scorer(config_for(server));
  std::vector<TextInput> inputs{{"first", "x"}, {"second", "two words"}, {"third", "three more words"}};
  // "x" tokenizes identically either way; the second input is the first to fail.
  CHECK_THROWS_WITH_AS(scorer.fetch_all(inputs, 3), doctest::Contains("second"), TokenizerMismatchError);
}

TEST_CASE("echo parsing") {
  SUBCASE("token_id strings and slack") {
    const auto e = parse_completions_echo(
        R"({"choices":[{"logprobs":{"tokens":["token_id:1","token_id:42"],"token_logprobs":[null,1e-9]}}]})", 5);
    REQUIRE(e.token_ids.size() == 1);
    CHECK(e.token_ids[0] == 42);
    CHECK(e.logprobs[0] == 0.0);
  }
  SUBCASE("null logprob after the first token") {
    CHECK_THROWS_AS(parse_completions_echo(
                        R"({"choices":[{"logprobs":{"tokens":["token_id:1","token_id:2"],"token_logprobs":[-1.0,null]}}]})",
                        5),
                    CapabilityError);
  }
  SUBCASE("no ids at all") {
    CHECK_THROWS_AS(
        parse_completions_echo(R"({"choices":[{"logprobs":{"tokens":["a","b"],"token_logprobs":[null,-1.0]}}]})", 2),
        CapabilityError);
  }
  SUBCASE("malformed body") {
    CHECK_THROWS_AS(parse_completions_echo("<html>", 1), TransportError);
    CHECK_THROWS_AS(parse_completions_echo(R"({"choices":[]})", 1), TransportError);
  }
}

TEST_CASE("configuration is checked") {
  RemoteConfig c;
  CHECK_THROWS_AS(RemoteScorer{c}, ConfigError);
  c.policy_url = "localhost:8000";
  c.ref_url = "http://h/v1/completions";
  c.policy_model = c.ref_model = "m";
  c.tokenizer_id = "t";
  CHECK_THROWS_AS(RemoteScorer{c}, ConfigError);
}
