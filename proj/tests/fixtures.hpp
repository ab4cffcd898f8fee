#pragma once

// Synthetic sequences and on-disk corpora for tests.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "irm/dataset.hpp"
#include "irm/records.hpp"
#include "json.hpp"

#include <unistd.h>

namespace irm::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("irm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

struct SequenceOptions {
  bool ranks = true;
  bool xent = true;
  bool moments = true;
  /// Mean per-token policy-minus-reference logprob gap.
  double reward_shift = 0.0;
  std::string policy_model = "policy";
  std::string ref_model = "ref";
};

/// Random sequence with plausible values for every field requested.
inline ScoredSequence random_sequence(std::mt19937_64& rng, const std::string& text_id, std::size_t length,
                                      const SequenceOptions& opt = {}) {
  std::uniform_real_distribution<double> ref_lp(-8.0, -0.05);
  std::normal_distribution<double> gap(opt.reward_shift, 0.5);
  std::uniform_int_distribution<std::int64_t> rank(1, 50);
  std::uniform_int_distribution<std::int64_t> tok(0, 32000);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::vector<TokenRecord> recs;
  recs.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    TokenRecord r;
    r.position = static_cast<std::int64_t>(i);
    r.token_id = tok(rng);
    r.token_text = "t" + std::to_string(r.token_id);
    r.logprob_ref = ref_lp(rng);
    r.logprob_policy = std::min(-1e-3, r.logprob_ref + gap(rng));
    if (opt.ranks) {
      r.rank_policy = rank(rng);
      r.rank_ref = rank(rng);
    }
    if (opt.xent) r.xent_policy_ref = -r.logprob_policy * (0.5 + unit(rng));
    if (opt.moments) {
      r.exp_logprob_policy = r.logprob_policy - (unit(rng) - 0.5);
      r.var_logprob_policy = unit(rng) * 3.0;
    }
    recs.push_back(std::move(r));
  }
  return ScoredSequence(text_id, opt.policy_model, opt.ref_model, "tok-A", std::move(recs));
}

/// Logprob-only sequence from explicit per-token values.
inline ScoredSequence make_sequence(const std::vector<double>& policy, const std::vector<double>& ref,
                                    const std::string& text_id = "t", const std::string& policy_model = "policy",
                                    const std::string& ref_model = "ref") {
  std::vector<TokenRecord> recs(policy.size());
  for (std::size_t i = 0; i < policy.size(); ++i) {
    recs[i].position = static_cast<std::int64_t>(i);
    recs[i].token_id = static_cast<std::int64_t>(100 + i);
    recs[i].token_text = "x" + std::to_string(i);
    recs[i].logprob_policy = policy[i];
    recs[i].logprob_ref = ref[i];
  }
  return ScoredSequence(text_id, policy_model, ref_model, "tok-A", std::move(recs));
}

/// Same records with fields edited by `fn`, revalidated.
template <typename Fn>
ScoredSequence edit_records(const ScoredSequence& seq, Fn fn) {
  std::vector<TokenRecord> recs(seq.records().begin(), seq.records().end());
  for (auto& r : recs) fn(r);
  return ScoredSequence(seq.text_id(), seq.policy_model_id(), seq.ref_model_id(), seq.tokenizer_id(),
                        std::move(recs));
}

struct CorpusSubtask {
  Task task;
  std::string subtask;
  std::size_t n_human;
  std::size_t n_llm;
};

struct CorpusSpec {
  std::vector<CorpusSubtask> subtasks;
  std::uint64_t seed = 1;
  /// Per-token reward gap for LLM texts (human texts use minus this).
  double llm_shift = 0.4;
  bool write_dump = true;
  /// Full capability (ranks, cross-entropy, moments) in the dump.
  bool full_capability = true;
  std::size_t min_words = 5;
  std::size_t max_words = 30;
};

struct CorpusExample {
  std::string text_id;
  Task task;
  std::string subtask;
  Label label;
  std::size_t words;
};

/// Writes `<task>.jsonl` files in the default layout under `root`, and, when
/// requested, a matching record dump at `root/records.jsonl` with one token
/// per word.
inline std::vector<CorpusExample> write_corpus(const std::filesystem::path& root, const CorpusSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> words(spec.min_words, spec.max_words);
  std::map<Task, std::ofstream> files;
  std::vector<CorpusExample> out;
  std::vector<ScoredSequence> seqs;
  std::size_t counter = 0;

  for (const auto& sub : spec.subtasks) {
    auto& file = files[sub.task];
    if (!file.is_open()) file.open(root / (std::string(to_string(sub.task)) + ".jsonl"), std::ios::binary);
    for (std::size_t i = 0; i < sub.n_human + sub.n_llm; ++i) {
      const Label label = i < sub.n_human ? Label::kHuman : Label::kLlm;
      const std::size_t idx_in_class = label == Label::kHuman ? i : i - sub.n_human;
      std::size_t n_words = words(rng);
      if (sub.task == Task::kVaryingLength) n_words = (idx_in_class % 18) * 20 + 10;
      std::string text;
      for (std::size_t w = 0; w < n_words; ++w) text += (w ? " " : "") + std::string("w") + std::to_string((counter * 7 + w) % 997);
      const std::string id = std::string(to_string(sub.task)) + "-" + std::to_string(counter++);
      nlohmann::ordered_json o;
      o["id"] = id;
      o["text"] = text;
      o["label"] = label == Label::kLlm ? "llm" : "human";
      if (sub.task != Task::kVaryingLength) o["subtask"] = sub.subtask;
      file << o.dump() << '\n';
      out.push_back({id, sub.task, sub.subtask, label, n_words});
      if (spec.write_dump) {
        SequenceOptions opt;
        opt.ranks = opt.xent = opt.moments = spec.full_capability;
        opt.reward_shift = label == Label::kLlm ? spec.llm_shift : -spec.llm_shift;
        seqs.push_back(random_sequence(rng, id, n_words, opt));
      }
    }
  }
  for (auto& [_, f] : files) f.close();
  if (spec.write_dump) write_dump(root / "records.jsonl", seqs);
  return out;
}

/// Subtasks and sizes of the published benchmark table.
inline std::vector<CorpusSubtask> benchmark_shaped_subtasks(double scale = 1.0) {
  std::vector<CorpusSubtask> subs;
  for (const auto& e : expected_benchmark_counts()) {
    const auto n = static_cast<std::size_t>(static_cast<double>(e.expected) * scale);
    subs.push_back({*parse_task(e.task), e.subtask, n / 2, n - n / 2});
  }
  return subs;
}

}  // namespace irm::testing
