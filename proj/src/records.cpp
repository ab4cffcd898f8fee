#include "irm/records.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "irm/error.hpp"
#include "json.hpp"

namespace irm {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kSequenceKeys[] = {"text_id", "policy_model_id", "ref_model_id",
                                              "tokenizer_id", "records"};
constexpr std::string_view kRecordKeys[] = {
    "position",  "token_id",        "token_text",         "logprob_policy",    "logprob_ref",
    "rank_policy", "rank_ref",      "xent_policy_ref",    "exp_logprob_policy", "var_logprob_policy"};

std::string at_position(std::size_t i) { return " at record " + std::to_string(i); }

void check_optional_homogeneous(bool first_present, bool present, std::string_view field,
                                std::size_t i) {
  if (first_present != present) {
    throw ValidationError("mixed capability: field '" + std::string(field) +
                          "' present at some positions but not others (first disagreement" +
                          at_position(i) + ")");
  }
}

void validate_record(const TokenRecord& r, std::size_t i) {
  if (r.position != static_cast<std::int64_t>(i)) {
    throw ValidationError("positions must be contiguous from 0; expected " + std::to_string(i) +
                          ", got " + std::to_string(r.position));
  }
  if (r.token_id < 0) throw ValidationError("negative token_id" + at_position(i));
  if (!std::isfinite(r.logprob_policy) || r.logprob_policy > 0.0) {
    throw ValidationError("logprob_policy must be finite and <= 0" + at_position(i));
  }
  if (!std::isfinite(r.logprob_ref) || r.logprob_ref > 0.0) {
    throw ValidationError("logprob_ref must be finite and <= 0" + at_position(i));
  }
  if (r.rank_policy && *r.rank_policy < 1) throw ValidationError("rank_policy < 1" + at_position(i));
  if (r.rank_ref && *r.rank_ref < 1) throw ValidationError("rank_ref < 1" + at_position(i));
  if (r.xent_policy_ref && (!std::isfinite(*r.xent_policy_ref) || *r.xent_policy_ref < 0.0)) {
    throw ValidationError("xent_policy_ref must be finite and >= 0" + at_position(i));
  }
  if (r.exp_logprob_policy && !std::isfinite(*r.exp_logprob_policy)) {
    throw ValidationError("exp_logprob_policy must be finite" + at_position(i));
  }
  if (r.var_logprob_policy &&
      (!std::isfinite(*r.var_logprob_policy) || *r.var_logprob_policy < 0.0)) {
    throw ValidationError("var_logprob_policy must be finite and >= 0" + at_position(i));
  }
}

void warn_or_default(const DumpOptions& options, const std::string& msg) {
  if (options.warn) {
    options.warn(msg);
  } else {
    std::cerr << "warning: " << msg << '\n';
  }
}

template <std::size_t N>
void check_keys(const json& obj, const std::string_view (&allowed)[N], const DumpOptions& options,
                const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (known) continue;
    const std::string msg = "unknown key '" + key + "' " + where;
    if (options.strict) throw ParseError(msg);
    warn_or_default(options, msg);
  }
}

std::string line_prefix(std::size_t line_number) {
  return "line " + std::to_string(line_number) + ": ";
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + "missing key '" + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw ParseError(where + "key '" + key + "' must be a string");
  return v.get<std::string>();
}

double require_number(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) throw ParseError(where + "key '" + key + "' must be a number");
  return v.get<double>();
}

std::int64_t require_integer(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) throw ParseError(where + "key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::optional<double> optional_number(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  if (!it->is_number()) throw ParseError(where + "key '" + key + "' must be a number");
  return it->get<double>();
}

std::optional<std::int64_t> optional_integer(const json& obj, const char* key,
                                             const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  if (!it->is_number_integer()) throw ParseError(where + "key '" + key + "' must be an integer");
  return it->get<std::int64_t>();
}

// A dump may carry per-model tokenizer ids as {"policy": ..., "ref": ...};
// they must agree and collapse to the shared id.
std::string parse_tokenizer_id(const json& obj, const std::string& where) {
  const auto& v = require(obj, "tokenizer_id", where);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_object() && v.contains("policy") && v.contains("ref") && v["policy"].is_string() &&
      v["ref"].is_string()) {
    auto policy = v["policy"].get<std::string>();
    auto ref = v["ref"].get<std::string>();
    if (policy != ref) {
      throw ValidationError(where + "tokenizer_id mismatch between policy ('" + policy +
                            "') and ref ('" + ref + "')");
    }
    return policy;
  }
  throw ParseError(where + "tokenizer_id must be a string or {policy, ref} object");
}

}  // namespace

ScoredSequence::ScoredSequence(std::string text_id, std::string policy_model_id,
                               std::string ref_model_id, std::string tokenizer_id,
                               std::vector<TokenRecord> records)
    : text_id_(std::move(text_id)),
      policy_model_id_(std::move(policy_model_id)),
      ref_model_id_(std::move(ref_model_id)),
      tokenizer_id_(std::move(tokenizer_id)),
      records_(std::move(records)) {
  if (records_.empty()) throw ValidationError("sequence '" + text_id_ + "' has no records (L = 0)");
  if (policy_model_id_.empty() || ref_model_id_.empty()) {
    throw ValidationError("sequence '" + text_id_ + "' has an empty model id");
  }
  if (tokenizer_id_.empty()) throw ValidationError("sequence '" + text_id_ + "' has no tokenizer_id");

  const auto& first = records_.front();
  capabilities_.has_rank = first.rank_policy.has_value();
  capabilities_.has_cross_entropy = first.xent_policy_ref.has_value();
  capabilities_.has_curvature_moments = first.exp_logprob_policy.has_value();
  const bool has_rank_ref = first.rank_ref.has_value();
  const bool has_var = first.var_logprob_policy.has_value();

  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    try {
      validate_record(r, i);
      check_optional_homogeneous(capabilities_.has_rank, r.rank_policy.has_value(), "rank_policy", i);
      check_optional_homogeneous(has_rank_ref, r.rank_ref.has_value(), "rank_ref", i);
      check_optional_homogeneous(capabilities_.has_cross_entropy, r.xent_policy_ref.has_value(),
                                 "xent_policy_ref", i);
      check_optional_homogeneous(capabilities_.has_curvature_moments,
                                 r.exp_logprob_policy.has_value(), "exp_logprob_policy", i);
      check_optional_homogeneous(has_var, r.var_logprob_policy.has_value(), "var_logprob_policy", i);
    } catch (const ValidationError& e) {
      throw ValidationError("sequence '" + text_id_ + "': " + e.what());
    }
  }
  // Curvature needs both moments.
  capabilities_.has_curvature_moments = capabilities_.has_curvature_moments && has_var;
}

ScoredSequence parse_dump_line(std::string_view line, std::size_t line_number,
                               const DumpOptions& options) {
  const std::string where = line_prefix(line_number);
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where + "malformed JSON: " + e.what());
  }
  if (!obj.is_object()) throw ParseError(where + "expected a JSON object");
  check_keys(obj, kSequenceKeys, options, "on " + where.substr(0, where.size() - 2));

  auto text_id = require_string(obj, "text_id", where);
  auto policy_id = require_string(obj, "policy_model_id", where);
  auto ref_id = require_string(obj, "ref_model_id", where);
  auto tokenizer_id = parse_tokenizer_id(obj, where);

  const auto& arr = require(obj, "records", where);
  if (!arr.is_array()) throw ParseError(where + "'records' must be an array");

  std::vector<TokenRecord> records;
  records.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& r = arr[i];
    const std::string rwhere = where + "record " + std::to_string(i) + ": ";
    if (!r.is_object()) throw ParseError(rwhere + "expected an object");
    check_keys(r, kRecordKeys, options, "in " + rwhere.substr(0, rwhere.size() - 2));
    TokenRecord rec;
    rec.position = require_integer(r, "position", rwhere);
    rec.token_id = require_integer(r, "token_id", rwhere);
    rec.token_text = require_string(r, "token_text", rwhere);
    rec.logprob_policy = require_number(r, "logprob_policy", rwhere);
    rec.logprob_ref = require_number(r, "logprob_ref", rwhere);
    rec.rank_policy = optional_integer(r, "rank_policy", rwhere);
    rec.rank_ref = optional_integer(r, "rank_ref", rwhere);
    rec.xent_policy_ref = optional_number(r, "xent_policy_ref", rwhere);
    rec.exp_logprob_policy = optional_number(r, "exp_logprob_policy", rwhere);
    rec.var_logprob_policy = optional_number(r, "var_logprob_policy", rwhere);
    records.push_back(std::move(rec));
  }

  try {
    return ScoredSequence(std::move(text_id), std::move(policy_id), std::move(ref_id),
                          std::move(tokenizer_id), std::move(records));
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
}

std::string to_dump_line(const ScoredSequence& seq) {
  ordered_json obj;
  obj["text_id"] = seq.text_id();
  obj["policy_model_id"] = seq.policy_model_id();
  obj["ref_model_id"] = seq.ref_model_id();
  obj["tokenizer_id"] = seq.tokenizer_id();
  ordered_json records = ordered_json::array();
  for (const auto& r : seq.records()) {
    ordered_json o;
    o["position"] = r.position;
    o["token_id"] = r.token_id;
    o["token_text"] = r.token_text;
    o["logprob_policy"] = r.logprob_policy;
    o["logprob_ref"] = r.logprob_ref;
    if (r.rank_policy) o["rank_policy"] = *r.rank_policy;
    if (r.rank_ref) o["rank_ref"] = *r.rank_ref;
    if (r.xent_policy_ref) o["xent_policy_ref"] = *r.xent_policy_ref;
    if (r.exp_logprob_policy) o["exp_logprob_policy"] = *r.exp_logprob_policy;
    if (r.var_logprob_policy) o["var_logprob_policy"] = *r.var_logprob_policy;
    records.push_back(std::move(o));
  }
  obj["records"] = std::move(records);
  // Shortest round-trip float formatting; invalid UTF-8 is a hard error.
  return obj.dump(-1, ' ', false, ordered_json::error_handler_t::strict);
}

std::vector<ScoredSequence> load_dump(std::istream& in, const DumpOptions& options) {
  std::vector<ScoredSequence> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_dump_line(line, line_number, options));
  }
  if (out.empty()) throw ParseError("no sequences");
  return out;
}

std::vector<ScoredSequence> load_dump(const std::filesystem::path& path,
                                      const DumpOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dump '" + path.string() + "'");
  try {
    return load_dump(in, options);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_dump(std::ostream& out, std::span<const ScoredSequence> seqs) {
  for (const auto& s : seqs) out << to_dump_line(s) << '\n';
}

void write_dump(const std::filesystem::path& path, std::span<const ScoredSequence> seqs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write dump '" + path.string() + "'");
  write_dump(out, seqs);
}

ScoredSequence chain_compose(const ScoredSequence& seq_ab, const ScoredSequence& seq_bc) {
  if (seq_ab.text_id() != seq_bc.text_id()) {
    throw ValidationError("chain_compose: text ids differ ('" + seq_ab.text_id() + "' vs '" +
                          seq_bc.text_id() + "')");
  }
  if (seq_ab.tokenizer_id() != seq_bc.tokenizer_id()) {
    throw ValidationError("chain_compose: tokenizer ids differ");
  }
  if (seq_ab.length() != seq_bc.length()) {
    throw ValidationError("chain_compose: token counts differ (" + std::to_string(seq_ab.length()) +
                          " vs " + std::to_string(seq_bc.length()) + ")");
  }
  if (seq_ab.policy_model_id() != seq_bc.ref_model_id()) {
    throw ValidationError("chain_compose: chain break, policy '" + seq_ab.policy_model_id() +
                          "' of the first step is not the reference '" + seq_bc.ref_model_id() +
                          "' of the second");
  }

  const auto ab = seq_ab.records();
  const auto bc = seq_bc.records();
  std::vector<TokenRecord> records;
  records.reserve(ab.size());
  for (std::size_t i = 0; i < ab.size(); ++i) {
    if (ab[i].token_id != bc[i].token_id) {
      throw ValidationError("chain_compose: token id mismatch at position " + std::to_string(i));
    }
    TokenRecord r;
    r.position = ab[i].position;
    r.token_id = ab[i].token_id;
    r.token_text = ab[i].token_text;
    r.logprob_ref = ab[i].logprob_ref;
    r.rank_ref = ab[i].rank_ref;
    r.logprob_policy = bc[i].logprob_policy;
    r.rank_policy = bc[i].rank_policy;
    r.exp_logprob_policy = bc[i].exp_logprob_policy;
    r.var_logprob_policy = bc[i].var_logprob_policy;
    records.push_back(std::move(r));
  }
  return ScoredSequence(seq_ab.text_id(), seq_bc.policy_model_id(), seq_ab.ref_model_id(),
                        seq_ab.tokenizer_id(), std::move(records));
}

}  // namespace irm
