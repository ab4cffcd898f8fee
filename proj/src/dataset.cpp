#include "irm/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace irm {
namespace {

using nlohmann::json;

constexpr std::string_view kVaryingLengthSubtask = "-";

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string default_subtask_role(Task t) {
  switch (t) {
    case Task::kMultiDomain: return "domain";
    case Task::kMultiLlm: return "source_llm";
    case Task::kMultiAttack:
    case Task::kHumanWriting: return "attack";
    case Task::kVaryingLength: return "";
  }
  return "";
}

// Records parsed from one JSON array or JSONL file.
std::vector<json> parse_records(const std::filesystem::path& file) {
  const auto content = read_file(file);
  const auto first = content.find_first_not_of(" \t\r\n");
  std::vector<json> out;
  if (first == std::string::npos) return out;
  try {
    if (content[first] == '[') {
      auto arr = json::parse(content);
      for (auto& v : arr) out.push_back(std::move(v));
      return out;
    }
  } catch (const json::parse_error& e) {
    throw DatasetError(file.string() + ": malformed JSON: " + e.what());
  }
  std::istringstream in(content);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DatasetError(file.string() + ": line " + std::to_string(line_number) +
                         ": malformed JSON: " + e.what());
    }
  }
  return out;
}

std::optional<std::string> string_field(const json& rec, const std::string& field) {
  auto it = rec.find(field);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

std::optional<std::string> mapped(const TaskSource& src, const json& rec, const std::string& role) {
  auto it = src.metadata_fields.find(role);
  if (it == src.metadata_fields.end()) return std::nullopt;
  return string_field(rec, it->second);
}

struct FileJob {
  Task task;
  std::filesystem::path file;
  std::optional<std::string> fixed_subtask;
};

struct LoadedRecord {
  std::string subtask;
  LabeledExample example;
};

std::vector<LoadedRecord> load_file(const FileJob& job, const TaskSource& src) {
  const auto records = parse_records(job.file);
  std::vector<LoadedRecord> out;
  out.reserve(records.size());
  const auto where = [&](std::size_t i) {
    return job.file.string() + ": record " + std::to_string(i) + ": ";
  };

  auto subtask_role = default_subtask_role(job.task);
  if (src.metadata_fields.count("subtask")) subtask_role = "subtask";

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (!rec.is_object()) throw DatasetError(where(i) + "expected an object");
    LabeledExample ex;
    ex.task = job.task;

    auto text_it = rec.find(src.text_field);
    if (text_it == rec.end() || !text_it->is_string()) {
      throw DatasetError(where(i) + "missing string field '" + src.text_field + "'");
    }
    ex.text = text_it->get<std::string>();
    ex.word_count = count_words(ex.text);
    if (ex.word_count < 1) throw DatasetError(where(i) + "empty text");

    auto label_it = rec.find(src.label_field);
    if (label_it == rec.end()) throw DatasetError(where(i) + "missing field '" + src.label_field + "'");
    const auto label_text = label_it->dump();
    if (label_text == src.llm_value) {
      ex.label = Label::kLlm;
    } else if (label_text == src.human_value) {
      ex.label = Label::kHuman;
    } else {
      throw DatasetError(where(i) + "label " + label_text + " matches neither " + src.human_value +
                         " nor " + src.llm_value);
    }

    auto id = mapped(src, rec, "text_id");
    ex.text_id = id ? *id
                    : std::string(to_string(job.task)) + "/" + job.file.stem().string() + "/" +
                          std::to_string(i);
    ex.domain = mapped(src, rec, "domain").value_or("");
    ex.source_llm = mapped(src, rec, "source_llm");
    ex.attack = mapped(src, rec, "attack");

    std::string subtask;
    if (job.task == Task::kVaryingLength) {
      subtask = kVaryingLengthSubtask;
    } else if (job.fixed_subtask) {
      subtask = *job.fixed_subtask;
    } else {
      auto raw = subtask_role == "domain"     ? std::optional<std::string>(ex.domain)
                 : subtask_role == "subtask"  ? mapped(src, rec, "subtask")
                 : subtask_role == "source_llm" ? ex.source_llm
                                                : ex.attack;
      if (!raw || raw->empty()) {
        throw DatasetError(where(i) + "no subtask value (role '" + subtask_role + "')");
      }
      subtask = *raw;
    }
    if (auto alias = src.subtask_aliases.find(subtask); alias != src.subtask_aliases.end()) {
      subtask = alias->second;
    }
    out.push_back({std::move(subtask), std::move(ex)});
  }
  return out;
}

// Unbiased draw in [0, bound) from a fully specified engine, so sampling is
// reproducible across standard libraries.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

std::string_view to_string(Task t) {
  switch (t) {
    case Task::kMultiDomain: return "multi_domain";
    case Task::kMultiLlm: return "multi_llm";
    case Task::kMultiAttack: return "multi_attack";
    case Task::kVaryingLength: return "varying_length";
    case Task::kHumanWriting: return "human_writing";
  }
  return "unknown";
}

std::optional<Task> parse_task(std::string_view key) {
  for (auto t : kAllTasks) {
    if (to_string(t) == key) return t;
  }
  return std::nullopt;
}

std::int64_t count_words(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

Manifest Manifest::parse(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  if (!doc.is_object() || doc.empty()) throw ManifestError("manifest must be a non-empty object");

  Manifest m;
  for (const auto& [key, entry] : doc.items()) {
    auto task = parse_task(key);
    if (!task) throw ManifestError("unknown task '" + key + "' in manifest");
    if (!entry.is_object()) throw ManifestError("manifest entry '" + key + "' must be an object");
    TaskSource src;
    for (const auto& [field, _] : entry.items()) {
      static const std::set<std::string> kKnown = {"path",         "text_field",      "label_field",
                                                   "label_values", "metadata_fields", "subtask_aliases"};
      if (!kKnown.count(field)) throw ManifestError("manifest '" + key + "': unmapped field '" + field + "'");
    }
    if (!entry.contains("path")) throw ManifestError("manifest '" + key + "': missing 'path'");
    const auto& path = entry["path"];
    if (path.is_string()) {
      src.path = path.get<std::string>();
    } else if (path.is_object() && !path.empty()) {
      for (const auto& [sub, p] : path.items()) {
        if (!p.is_string()) throw ManifestError("manifest '" + key + "': path of '" + sub + "' must be a string");
        src.subtask_paths[sub] = p.get<std::string>();
      }
    } else {
      throw ManifestError("manifest '" + key + "': 'path' must be a string or a subtask -> file object");
    }
    for (const char* f : {"text_field", "label_field"}) {
      if (!entry.contains(f) || !entry[f].is_string()) {
        throw ManifestError("manifest '" + key + "': '" + f + "' must be mapped to a field name");
      }
    }
    src.text_field = entry["text_field"].get<std::string>();
    src.label_field = entry["label_field"].get<std::string>();
    if (entry.contains("label_values")) {
      const auto& lv = entry["label_values"];
      if (!lv.is_object() || !lv.contains("human") || !lv.contains("llm")) {
        throw ManifestError("manifest '" + key + "': label_values needs 'human' and 'llm'");
      }
      src.human_value = lv["human"].dump();
      src.llm_value = lv["llm"].dump();
    }
    if (entry.contains("metadata_fields")) {
      static const std::set<std::string> kRoles = {"text_id", "domain", "source_llm", "attack", "subtask"};
      for (const auto& [role, field] : entry["metadata_fields"].items()) {
        if (!kRoles.count(role)) throw ManifestError("manifest '" + key + "': unknown metadata role '" + role + "'");
        if (!field.is_string()) throw ManifestError("manifest '" + key + "': metadata field must be a string");
        src.metadata_fields[role] = field.get<std::string>();
      }
    }
    if (entry.contains("subtask_aliases")) {
      for (const auto& [raw, name] : entry["subtask_aliases"].items()) {
        if (!name.is_string()) throw ManifestError("manifest '" + key + "': alias must be a string");
        src.subtask_aliases[raw] = name.get<std::string>();
      }
    }
    m.tasks[*task] = std::move(src);
  }
  return m;
}

Manifest Manifest::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest '" + file.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Manifest Manifest::default_layout() {
  Manifest m;
  for (auto t : kAllTasks) {
    TaskSource src;
    src.path = std::string(to_string(t)) + ".jsonl";
    src.metadata_fields = {{"text_id", "id"}};
    if (t != Task::kVaryingLength) src.metadata_fields["subtask"] = "subtask";
    m.tasks[t] = std::move(src);
  }
  return m;
}

std::vector<SubtaskSplit> load_detectrl(const std::filesystem::path& root,
                                        const std::optional<Manifest>& manifest, std::span<const Task> only) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw DatasetError("dataset root '" + root.string() + "' is not a directory");
  }
  if (std::filesystem::directory_iterator(root) == std::filesystem::directory_iterator()) {
    throw DatasetError("dataset root '" + root.string() + "' is empty");
  }

  Manifest m;
  if (manifest) {
    m = *manifest;
  } else if (std::filesystem::exists(root / "manifest.json")) {
    m = Manifest::load(root / "manifest.json");
  } else {
    m = Manifest::default_layout();
  }

  std::vector<FileJob> jobs;
  std::vector<std::string> absent;
  for (const auto& [task, src] : m.tasks) {
    if (!only.empty() && std::find(only.begin(), only.end(), task) == only.end()) continue;
    auto add = [&](const std::filesystem::path& rel, std::optional<std::string> subtask) {
      const auto full = rel.is_absolute() ? rel : root / rel;
      if (!std::filesystem::is_regular_file(full)) {
        absent.push_back(std::string(to_string(task)) + (subtask ? "/" + *subtask : "") + " (" +
                         full.string() + ")");
      } else {
        jobs.push_back({task, full, std::move(subtask)});
      }
    };
    if (src.path) add(*src.path, std::nullopt);
    for (const auto& [sub, p] : src.subtask_paths) add(p, sub);
  }
  if (!absent.empty()) {
    std::string msg = "missing benchmark files for:";
    for (const auto& a : absent) msg += "\n  " + a;
    throw DatasetError(msg);
  }

  std::vector<std::vector<LoadedRecord>> loaded(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto n_jobs = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n_jobs; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      loaded[k] = load_file(jobs[k], m.tasks.at(jobs[k].task));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::map<std::pair<Task, std::string>, SubtaskSplit> splits;
  std::map<Task, std::set<std::string>> seen_ids;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    for (auto& rec : loaded[k]) {
      auto& ids = seen_ids[jobs[k].task];
      if (!ids.insert(rec.example.text_id).second) {
        throw DatasetError("duplicate text_id '" + rec.example.text_id + "' in task " +
                           std::string(to_string(jobs[k].task)));
      }
      auto& split = splits[{jobs[k].task, rec.subtask}];
      split.task = jobs[k].task;
      split.subtask = rec.subtask;
      split.examples.push_back(std::move(rec.example));
    }
  }
  if (splits.empty()) throw DatasetError("no examples found under '" + root.string() + "'");

  std::vector<SubtaskSplit> out;
  out.reserve(splits.size());
  for (auto& [_, s] : splits) out.push_back(std::move(s));
  return out;
}

const std::vector<StatsEntry>& expected_benchmark_counts() {
  static const std::vector<StatsEntry> kCounts = {
      {"multi_domain", "Academic", 2008, 0},       {"multi_domain", "News", 2008, 0},
      {"multi_domain", "Creative", 2008, 0},       {"multi_domain", "Social Media", 2008, 0},
      {"multi_llm", "GPT-3.5-turbo", 2008, 0},     {"multi_llm", "Claude-instant", 2008, 0},
      {"multi_llm", "PaLM-2-bison", 2008, 0},      {"multi_llm", "Llama-2-70b", 2008, 0},
      {"multi_attack", "Direct", 2016, 0},         {"multi_attack", "Prompt", 2032, 0},
      {"multi_attack", "Paraphrase", 2016, 0},     {"multi_attack", "Perturbation", 2016, 0},
      {"multi_attack", "Data Mixing", 2008, 0},    {"varying_length", "-", 16200, 0},
      {"human_writing", "Direct", 2016, 0},        {"human_writing", "Paraphrase", 2016, 0},
      {"human_writing", "Perturbation", 2016, 0},  {"human_writing", "Data Mixing", 2012, 0},
  };
  return kCounts;
}

StatsReport validate_stats(const std::vector<SubtaskSplit>& splits) {
  std::map<std::pair<std::string, std::string>, std::int64_t> actual;
  for (const auto& s : splits) {
    actual[{std::string(to_string(s.task)), s.subtask}] += static_cast<std::int64_t>(s.examples.size());
  }
  StatsReport report;
  for (auto e : expected_benchmark_counts()) {
    auto it = actual.find({e.task, e.subtask});
    e.actual = it == actual.end() ? 0 : it->second;
    (e.actual == e.expected ? report.matched : report.mismatches).push_back(e);
    if (it != actual.end()) actual.erase(it);
  }
  for (const auto& [key, n] : actual) report.unexpected.push_back({key.first, key.second, 0, n});
  return report;
}

LengthBucket length_bucket(std::int64_t word_count, int width, int max) {
  if (width <= 0) throw ValidationError("length_bucket: width must be positive");
  if (max < width) throw ValidationError("length_bucket: max must be at least one bucket wide");
  if (word_count < 0) throw ValidationError("length_bucket: negative word count");
  const std::int64_t last = (max - 1) / width;
  const std::int64_t k = std::min<std::int64_t>(word_count / width, last);
  const int lo = static_cast<int>(k * width);
  return LengthBucket{lo, lo + width};
}

LengthBucket length_bucket(const LabeledExample& example, int width, int max) {
  return length_bucket(example.word_count, width, max);
}

SubtaskSplit sample_balanced(const SubtaskSplit& split, std::size_t n_per_class, std::uint64_t seed) {
  std::vector<std::size_t> human;
  std::vector<std::size_t> llm;
  for (std::size_t i = 0; i < split.examples.size(); ++i) {
    (split.examples[i].label == Label::kLlm ? llm : human).push_back(i);
  }
  if (human.size() < n_per_class || llm.size() < n_per_class) {
    throw DatasetError("sample_balanced: subtask '" + split.subtask + "' has " +
                       std::to_string(human.size()) + " human and " + std::to_string(llm.size()) +
                       " LLM examples; " + std::to_string(n_per_class) + " per class requested");
  }

  std::mt19937_64 rng(seed);
  auto pick = [&](std::vector<std::size_t>& idx) {
    // Partial Fisher-Yates: the first n entries become a uniform sample.
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const auto j = i + draw_below(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(n_per_class);
  };
  pick(human);
  pick(llm);

  std::vector<std::size_t> chosen;
  chosen.reserve(2 * n_per_class);
  chosen.insert(chosen.end(), human.begin(), human.end());
  chosen.insert(chosen.end(), llm.begin(), llm.end());
  std::sort(chosen.begin(), chosen.end());

  SubtaskSplit out;
  out.task = split.task;
  out.subtask = split.subtask;
  out.examples.reserve(chosen.size());
  for (auto i : chosen) out.examples.push_back(split.examples[i]);
  return out;
}

}  // namespace irm
