#pragma once

// Token-level record model shared by every metric, plus the JSONL dump format
// that carries it between the extractor and the scoring layer.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace irm {

/// One position of a scored text under both the policy (instruction-tuned)
/// and the reference (base) model. Log-probabilities are natural logs.
struct TokenRecord {
  std::int64_t position = 0;
  std::int64_t token_id = 0;
  std::string token_text;
  double logprob_policy = 0.0;
  double logprob_ref = 0.0;
  std::optional<std::int64_t> rank_policy;
  std::optional<std::int64_t> rank_ref;
  std::optional<double> xent_policy_ref;
  std::optional<double> exp_logprob_policy;
  std::optional<double> var_logprob_policy;

  bool operator==(const TokenRecord&) const = default;
};

struct ProviderCapabilities {
  bool has_chosen_logprob = true;
  bool has_rank = false;
  bool has_cross_entropy = false;
  bool has_curvature_moments = false;

  bool operator==(const ProviderCapabilities&) const = default;
};

/// A validated, immutable token sequence. Construction enforces every record
/// invariant: L >= 1, contiguous positions from 0, logprobs <= 0 and finite,
/// ranks >= 1, non-negative cross-entropy and variance, and capability
/// homogeneity (an optional field is present at all positions or at none).
class ScoredSequence {
 public:
  ScoredSequence(std::string text_id, std::string policy_model_id, std::string ref_model_id,
                 std::string tokenizer_id, std::vector<TokenRecord> records);

  const std::string& text_id() const noexcept { return text_id_; }
  const std::string& policy_model_id() const noexcept { return policy_model_id_; }
  const std::string& ref_model_id() const noexcept { return ref_model_id_; }
  const std::string& tokenizer_id() const noexcept { return tokenizer_id_; }
  std::span<const TokenRecord> records() const noexcept { return records_; }
  std::size_t length() const noexcept { return records_.size(); }
  const ProviderCapabilities& capabilities() const noexcept { return capabilities_; }

  bool operator==(const ScoredSequence&) const = default;

 private:
  std::string text_id_;
  std::string policy_model_id_;
  std::string ref_model_id_;
  std::string tokenizer_id_;
  std::vector<TokenRecord> records_;
  ProviderCapabilities capabilities_;
};

struct DumpOptions {
  /// Reject unknown keys instead of ignoring them with a warning.
  bool strict = false;
  /// Receives non-fatal warnings. Defaults to stderr when empty.
  std::function<void(std::string_view)> warn;
};

/// Parses one dump line. `line_number` is 1-based and only used in messages.
ScoredSequence parse_dump_line(std::string_view line, std::size_t line_number,
                               const DumpOptions& options = {});

/// Serializes one sequence as a single JSON line, without the trailing LF.
std::string to_dump_line(const ScoredSequence& seq);

std::vector<ScoredSequence> load_dump(std::istream& in, const DumpOptions& options = {});
std::vector<ScoredSequence> load_dump(const std::filesystem::path& path,
                                      const DumpOptions& options = {});

void write_dump(std::ostream& out, std::span<const ScoredSequence> seqs);
void write_dump(const std::filesystem::path& path, std::span<const ScoredSequence> seqs);

/// Composes the alignment steps A->B (seq_ab) and B->C (seq_bc) into A->C.
/// The result takes its reference side from seq_ab and its policy side from
/// seq_bc, so its IRM score equals the sum of the two step scores. The
/// cross-entropy field is dropped because it pairs distributions that are
/// not both present in the composition.
ScoredSequence chain_compose(const ScoredSequence& seq_ab, const ScoredSequence& seq_bc);

}  // namespace irm
