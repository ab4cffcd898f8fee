#pragma once

// Record provider backed by two completions endpoints (policy and reference)
// that echo prompt tokens with per-token logprobs. Only chosen-token logprobs
// are available this way; rank, cross-entropy and curvature need a dump file.

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irm/records.hpp"

namespace irm {

struct RemoteConfig {
  /// Full endpoint URLs, e.g. "http://127.0.0.1:8000/v1/completions".
  std::string policy_url;
  std::string ref_url;
  /// Values sent in the request's "model" field.
  std::string policy_model;
  std::string ref_model;
  /// Shared tokenizer identifier recorded on every fetched sequence.
  std::string tokenizer_id;
  /// Upper bound on in-flight requests per endpoint.
  std::size_t max_in_flight = 4;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{100};
  double backoff_multiplier = 2.0;
  std::chrono::seconds timeout{60};
  /// Ask the server to report tokens as "token_id:<n>" (vLLM convention).
  bool request_token_ids = true;
  std::optional<std::string> api_key;
};

ProviderCapabilities remote_capabilities();

struct TextInput {
  std::string text_id;
  std::string text;
};

class RemoteScorer {
 public:
  explicit RemoteScorer(RemoteConfig config);
  ~RemoteScorer();
  RemoteScorer(RemoteScorer&&) noexcept;
  RemoteScorer& operator=(RemoteScorer&&) noexcept;

  /// Scores one text against both endpoints. The text is sent bare (no chat
  /// template). A leading echoed token without a logprob (the BOS token, or
  /// an unconditioned first token) is treated as context and not scored.
  ScoredSequence fetch(std::string_view text_id, std::string_view text) const;

  /// Scores many texts with up to `workers` concurrent fetches. Results are
  /// returned in input order. If any fetch fails, the error of the earliest
  /// failing input is rethrown after all workers finish.
  std::vector<ScoredSequence> fetch_all(std::span<const TextInput> inputs, std::size_t workers) const;

  const RemoteConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ScoredSequence fetch_remote(std::string_view text_id, std::string_view text,
                            const RemoteConfig& config);

/// Parsed echo of one endpoint. Exposed for testing.
struct EchoedTokens {
  std::vector<std::int64_t> token_ids;
  std::vector<std::string> token_texts;
  std::vector<double> logprobs;
};

/// Extracts the prompt tokens from an OpenAI-style completions response body.
/// `prompt_bytes` is the byte length of the prompt, used with text_offset to
/// drop any generated continuation.
EchoedTokens parse_completions_echo(std::string_view body, std::size_t prompt_bytes);

}  // namespace irm
