#pragma once

// Benchmark ingestion: manifest-driven loading of labeled texts into
// per-task subtask splits, corpus statistics checks, length bucketing and
// seeded class-balanced sampling.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irm/evaluation.hpp"

namespace irm {

enum class Task { kMultiDomain, kMultiLlm, kMultiAttack, kVaryingLength, kHumanWriting };

inline constexpr std::array<Task, 5> kAllTasks = {Task::kMultiDomain, Task::kMultiLlm,
                                                  Task::kMultiAttack, Task::kVaryingLength,
                                                  Task::kHumanWriting};

/// multi_domain, multi_llm, multi_attack, varying_length, human_writing.
std::string_view to_string(Task t);
std::optional<Task> parse_task(std::string_view key);

struct LabeledExample {
  std::string text_id;
  std::string text;
  Label label = Label::kHuman;
  std::string domain;
  std::optional<std::string> source_llm;
  std::optional<std::string> attack;
  Task task = Task::kMultiDomain;
  std::int64_t word_count = 0;

  bool operator==(const LabeledExample&) const = default;
};

struct SubtaskSplit {
  Task task = Task::kMultiDomain;
  std::string subtask;
  std::vector<LabeledExample> examples;
};

/// Number of whitespace-delimited tokens.
std::int64_t count_words(std::string_view text);

/// Where one task's examples live and how their fields are named.
struct TaskSource {
  /// Either a single file holding every subtask...
  std::optional<std::filesystem::path> path;
  /// ...or one file per subtask (subtask name -> file).
  std::map<std::string, std::filesystem::path> subtask_paths;
  std::string text_field = "text";
  std::string label_field = "label";
  /// JSON-serialized label values, compared against the serialized field.
  std::string human_value = "\"human\"";
  std::string llm_value = "\"llm\"";
  /// Role -> field name. Roles: text_id, domain, source_llm, attack, subtask.
  std::map<std::string, std::string> metadata_fields;
  /// Raw subtask value -> canonical subtask name.
  std::map<std::string, std::string> subtask_aliases;
};

struct Manifest {
  std::map<Task, TaskSource> tasks;

  /// JSON object: task key -> {path, text_field, label_field, label_values,
  /// metadata_fields, subtask_aliases}. `path` is a string or an object
  /// mapping subtask name to file.
  static Manifest parse(std::string_view json_text);
  static Manifest load(const std::filesystem::path& file);
  /// One "<task>.jsonl" per task with fields text, label ("human"/"llm"),
  /// id and subtask.
  static Manifest default_layout();
};

/// Loads every task of the manifest from `root`. Uses `root/manifest.json`
/// when no manifest is passed and that file exists, else the default layout.
/// Splits come back ordered by task, then subtask name. Varying-length
/// examples form a single "-" split. A non-empty `only` restricts loading
/// (and the missing-file check) to those tasks.
std::vector<SubtaskSplit> load_detectrl(const std::filesystem::path& root,
                                        const std::optional<Manifest>& manifest = std::nullopt,
                                        std::span<const Task> only = {});

struct StatsEntry {
  std::string task;
  std::string subtask;
  std::int64_t expected = 0;
  std::int64_t actual = 0;
};

struct StatsReport {
  std::vector<StatsEntry> matched;
  /// Expected subtasks whose count differs (absent subtasks have actual 0).
  std::vector<StatsEntry> mismatches;
  /// Loaded subtasks with no expected count.
  std::vector<StatsEntry> unexpected;

  bool ok() const { return mismatches.empty() && unexpected.empty(); }
};

/// The published per-subtask benchmark sizes, in table order.
const std::vector<StatsEntry>& expected_benchmark_counts();

/// Compares split sizes with the published benchmark sizes. Report-only.
StatsReport validate_stats(const std::vector<SubtaskSplit>& splits);

/// [k*width, (k+1)*width) containing `word_count`; counts at or past `max`
/// fall into the last bucket below `max`.
LengthBucket length_bucket(std::int64_t word_count, int width = 20, int max = 360);
LengthBucket length_bucket(const LabeledExample& example, int width = 20, int max = 360);

/// Seeded class-balanced subsample; selected examples keep their original
/// relative order. Throws DatasetError if a class has fewer than
/// `n_per_class` examples.
SubtaskSplit sample_balanced(const SubtaskSplit& split, std::size_t n_per_class, std::uint64_t seed);

}  // namespace irm
