#include "irm/remote.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "irm/error.hpp"
#include "json.hpp"

namespace irm {
namespace {

using nlohmann::json;

// Servers occasionally report -0.0 or a rounding-level positive value for a
// certain token.
constexpr double kPositiveLogprobSlack = 1e-6;

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::optional<std::int64_t> parse_token_id_text(const std::string& tok) {
  constexpr std::string_view kPrefix = "token_id:";
  if (tok.rfind(kPrefix, 0) != 0) return std::nullopt;
  std::int64_t id = 0;
  const char* first = tok.data() + kPrefix.size();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, id);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return id;
}

class Endpoint {
 public:
  Endpoint(std::string url, std::string model, std::size_t max_in_flight)
      : url_(split_url(url)),
        model_(std::move(model)),
        slots_(static_cast<std::ptrdiff_t>(max_in_flight == 0 ? 1 : max_in_flight)) {}

  std::string post(const std::string& body, const RemoteConfig& cfg) const {
    auto backoff = cfg.initial_backoff;
    std::string last_error;
    int attempts = 0;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      ++attempts;
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<std::int64_t>(static_cast<double>(backoff.count()) * cfg.backoff_multiplier));
      }
      slots_.acquire();
      httplib::Result res;
      {
        httplib::Client client(url_.origin);
        client.set_connection_timeout(cfg.timeout);
        client.set_read_timeout(cfg.timeout);
        client.set_write_timeout(cfg.timeout);
        httplib::Headers headers;
        if (cfg.api_key) headers.emplace("Authorization", "Bearer " + *cfg.api_key);
        res = client.Post(url_.path, headers, body, "application/json");
      }
      slots_.release();

      if (!res) {
        last_error = "connection error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return res->body;
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status != 429 && res->status < 500) break;
    }
    throw TransportError(url_.origin + url_.path + ": " + last_error + " (" +
                         std::to_string(attempts) + " attempts)");
  }

  const std::string& model() const { return model_; }

 private:
  Url url_;
  std::string model_;
  mutable std::counting_semaphore<> slots_;
};

}  // namespace

ProviderCapabilities remote_capabilities() { return ProviderCapabilities{}; }

EchoedTokens parse_completions_echo(std::string_view body, std::size_t prompt_bytes) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("malformed completions response: ") + e.what());
  }
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw TransportError("completions response has no choices");
  }
  const auto& choice = doc["choices"][0];
  if (!choice.contains("logprobs") || !choice["logprobs"].is_object()) {
    throw CapabilityError("endpoint returned no prompt logprobs");
  }
  const auto& lp = choice["logprobs"];
  if (!lp.contains("token_logprobs") || !lp["token_logprobs"].is_array() ||
      lp["token_logprobs"].empty() || !lp.contains("tokens") || !lp["tokens"].is_array()) {
    throw CapabilityError("endpoint returned no prompt logprobs");
  }
  const auto& tokens = lp["tokens"];
  const auto& logprobs = lp["token_logprobs"];
  if (tokens.size() != logprobs.size()) {
    throw TransportError("tokens and token_logprobs differ in length");
  }

  std::size_t n = tokens.size();
  if (lp.contains("text_offset") && lp["text_offset"].is_array() &&
      lp["text_offset"].size() == n) {
    // Drop a generated continuation, if the server produced one.
    std::size_t keep = 0;
    while (keep < n && lp["text_offset"][keep].get<std::size_t>() < prompt_bytes) ++keep;
    n = keep;
  }

  const json* id_array = nullptr;
  if (lp.contains("token_ids") && lp["token_ids"].is_array()) {
    id_array = &lp["token_ids"];
  } else if (choice.contains("prompt_token_ids") && choice["prompt_token_ids"].is_array()) {
    id_array = &choice["prompt_token_ids"];
  }

  EchoedTokens out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto tok = tokens[i].get<std::string>();
    std::optional<std::int64_t> id;
    if (id_array && id_array->size() >= n) {
      id = (*id_array)[i].get<std::int64_t>();
    } else {
      id = parse_token_id_text(tok);
    }
    if (!id) throw CapabilityError("endpoint reports no token ids for the echoed prompt");

    if (logprobs[i].is_null()) {
      if (i == 0) continue;  // conditioning context only
      throw CapabilityError("endpoint returned a null logprob at position " + std::to_string(i));
    }
    double value = logprobs[i].get<double>();
    if (value > 0.0 && value <= kPositiveLogprobSlack) value = 0.0;
    out.token_ids.push_back(*id);
    out.token_texts.push_back(tok);
    out.logprobs.push_back(value);
  }
  if (out.logprobs.empty()) throw CapabilityError("endpoint returned no scorable prompt tokens");
  return out;
}

struct RemoteScorer::Impl {
  RemoteConfig config;
  Endpoint policy;
  Endpoint ref;

  explicit Impl(RemoteConfig cfg)
      : config(std::move(cfg)),
        policy(config.policy_url, config.policy_model, config.max_in_flight),
        ref(config.ref_url, config.ref_model, config.max_in_flight) {}

  std::string request_body(const Endpoint& ep, std::string_view text) const {
    json body;
    body["model"] = ep.model();
    body["prompt"] = text;
    body["max_tokens"] = 0;
    body["echo"] = true;
    body["logprobs"] = 0;
    body["temperature"] = 0.0;
    if (config.request_token_ids) body["return_tokens_as_token_ids"] = true;
    return body.dump();
  }
};

RemoteScorer::RemoteScorer(RemoteConfig config) {
  if (config.policy_url.empty() || config.ref_url.empty()) {
    throw ConfigError("remote source needs both policy_url and ref_url");
  }
  if (config.tokenizer_id.empty()) throw ConfigError("remote source needs a tokenizer_id");
  if (config.policy_model.empty() || config.ref_model.empty()) {
    throw ConfigError("remote source needs both policy_model and ref_model");
  }
  impl_ = std::make_unique<Impl>(std::move(config));
}

RemoteScorer::~RemoteScorer() = default;
RemoteScorer::RemoteScorer(RemoteScorer&&) noexcept = default;
RemoteScorer& RemoteScorer::operator=(RemoteScorer&&) noexcept = default;

const RemoteConfig& RemoteScorer::config() const { return impl_->config; }

ScoredSequence RemoteScorer::fetch(std::string_view text_id, std::string_view text) const {
  const auto& cfg = impl_->config;
  const auto policy_body = impl_->policy.post(impl_->request_body(impl_->policy, text), cfg);
  const auto ref_body = impl_->ref.post(impl_->request_body(impl_->ref, text), cfg);

  const auto policy = parse_completions_echo(policy_body, text.size());
  const auto ref = parse_completions_echo(ref_body, text.size());

  if (policy.token_ids.size() != ref.token_ids.size()) {
    throw TokenizerMismatchError("text '" + std::string(text_id) + "': policy endpoint reports " +
                                 std::to_string(policy.token_ids.size()) + " tokens, reference " +
                                 std::to_string(ref.token_ids.size()));
  }
  std::vector<TokenRecord> records;
  records.reserve(policy.token_ids.size());
  for (std::size_t i = 0; i < policy.token_ids.size(); ++i) {
    if (policy.token_ids[i] != ref.token_ids[i]) {
      throw TokenizerMismatchError("text '" + std::string(text_id) + "': token id mismatch at position " +
                                   std::to_string(i));
    }
    TokenRecord r;
    r.position = static_cast<std::int64_t>(i);
    r.token_id = policy.token_ids[i];
    r.token_text = policy.token_texts[i];
    r.logprob_policy = policy.logprobs[i];
    r.logprob_ref = ref.logprobs[i];
    records.push_back(std::move(r));
  }
  return ScoredSequence(std::string(text_id), cfg.policy_model, cfg.ref_model, cfg.tokenizer_id,
                        std::move(records));
}

std::vector<ScoredSequence> RemoteScorer::fetch_all(std::span<const TextInput> inputs,
                                                    std::size_t workers) const {
  std::vector<std::optional<ScoredSequence>> results(inputs.size());
  std::vector<std::exception_ptr> errors(inputs.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        results[i] = fetch(inputs[i].text_id, inputs[i].text);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, inputs.size()));
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }

  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<ScoredSequence> out;
  out.reserve(inputs.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

ScoredSequence fetch_remote(std::string_view text_id, std::string_view text,
                            const RemoteConfig& config) {
  return RemoteScorer(config).fetch(text_id, text);
}

}  // namespace irm
