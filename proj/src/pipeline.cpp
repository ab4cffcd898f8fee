#include "irm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "irm/kernels.hpp"
#include "irm/records.hpp"
#include "json.hpp"

namespace irm {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr std::string_view kScoresFile = "scores.jsonl";
constexpr std::string_view kCalibrationFile = "calibration.json";

std::string read_text(const fs::path& p, ErrorKind kind) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(kind, "cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void ensure_output_dir(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec || !fs::is_directory(config.output_dir)) {
    throw ConfigError("output directory '" + config.output_dir.string() + "' is not writable");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" + key + "' in " + std::string(where));
    }
  }
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string subtask_key(const SubtaskSplit& split, const LabeledExample& ex, const RunConfig& config) {
  if (split.task == Task::kVaryingLength) {
    return std::string(kTaskVaryingLength) + "/" +
           length_bucket(ex, config.bucket_width, config.bucket_max).label();
  }
  return std::string(to_string(split.task)) + "/" + split.subtask;
}

int metric_order(Metric m) {
  return static_cast<int>(std::find(kAllMetrics.begin(), kAllMetrics.end(), m) - kAllMetrics.begin());
}

bool line_less(const ScoreLine& a, const ScoreLine& b) {
  if (a.text_id != b.text_id) return a.text_id < b.text_id;
  if (a.subtask != b.subtask) return a.subtask < b.subtask;
  return metric_order(a.metric) < metric_order(b.metric);
}

// metric -> task -> subtask -> scores
using GroupedScores =
    std::map<Metric, std::map<std::string, std::map<std::string, std::vector<LabeledScore>>>>;

GroupedScores group_scores(const std::vector<ScoreLine>& lines) {
  GroupedScores g;
  for (const auto& l : lines) {
    auto [task, sub] = split_subtask_key(l.subtask);
    g[l.metric][task][sub].push_back({l.score, l.label, l.text_id, l.subtask});
  }
  return g;
}

BucketedScores bucketize(const std::map<std::string, std::vector<LabeledScore>>& subtasks) {
  BucketedScores out;
  for (const auto& [name, scores] : subtasks) {
    auto b = parse_length_bucket(name);
    if (!b) throw ValidationError("varying_length subtask '" + name + "' is not a <lo>-<hi> bucket");
    auto& dst = out[*b];
    dst.insert(dst.end(), scores.begin(), scores.end());
  }
  return out;
}

bool both_classes(const std::vector<LabeledScore>& s) {
  const auto c = count_classes(s);
  return c.n_human > 0 && c.n_llm > 0;
}

std::optional<double> policy_threshold(const RunConfig& config, Metric m,
                                       const std::optional<CalibrationFile>& calibration) {
  switch (config.threshold_policy.kind) {
    case ThresholdPolicyKind::kBestF1: return std::nullopt;
    case ThresholdPolicyKind::kFixed: return config.threshold_policy.fixed_value;
    case ThresholdPolicyKind::kCalibration: {
      if (!calibration) throw ConfigError("threshold policy 'calibration' needs a calibration file");
      auto it = calibration->metrics.find(m);
      if (it == calibration->metrics.end()) {
        throw ConfigError("calibration file has no threshold for " + std::string(to_string(m)));
      }
      return it->second.global_threshold;
    }
  }
  return std::nullopt;
}

std::optional<CalibrationFile> calibration_for(const RunConfig& config,
                                               const std::optional<CalibrationFile>& given) {
  if (given) return given;
  if (config.threshold_policy.kind == ThresholdPolicyKind::kCalibration) {
    if (config.threshold_policy.calibration_path.empty()) {
      throw ConfigError("calibration threshold policy needs a calibration file");
    }
    return CalibrationFile::load(config.threshold_policy.calibration_path);
  }
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

RunConfig RunConfig::parse(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc,
                 {"dataset", "records", "metrics", "tasks", "threshold_policy", "generalization", "length",
                  "sample", "output_dir", "workers", "strict", "histogram_bins"},
                 "config");

  RunConfig c;
  if (!doc.contains("dataset") || !doc["dataset"].is_object()) throw ConfigError("config needs a 'dataset' object");
  const auto& ds = doc["dataset"];
  reject_unknown(ds, {"root", "manifest"}, "dataset");
  if (!ds.contains("root") || !ds["root"].is_string()) throw ConfigError("dataset.root must be a path");
  c.dataset_root = resolve(base_dir, ds["root"].get<std::string>());
  if (ds.contains("manifest")) c.manifest = resolve(base_dir, get_or<std::string>(ds, "manifest", ""));

  if (!doc.contains("records") || !doc["records"].is_object()) throw ConfigError("config needs a 'records' object");
  const auto& rec = doc["records"];
  reject_unknown(rec, {"dump", "remote"}, "records");
  if (rec.contains("dump") == rec.contains("remote")) {
    throw ConfigError("records must name exactly one source: 'dump' or 'remote'");
  }
  if (rec.contains("dump")) {
    c.dump_path = resolve(base_dir, get_or<std::string>(rec, "dump", ""));
  } else {
    const auto& r = rec["remote"];
    reject_unknown(r,
                   {"policy_url", "ref_url", "policy_model", "ref_model", "tokenizer_id", "parallelism",
                    "max_retries", "backoff_ms", "timeout_s", "request_token_ids", "api_key"},
                   "records.remote");
    RemoteConfig rc;
    rc.policy_url = get_or<std::string>(r, "policy_url", "");
    rc.ref_url = get_or<std::string>(r, "ref_url", "");
    rc.policy_model = get_or<std::string>(r, "policy_model", "");
    rc.ref_model = get_or<std::string>(r, "ref_model", "");
    rc.tokenizer_id = get_or<std::string>(r, "tokenizer_id", "");
    rc.max_in_flight = get_or<std::size_t>(r, "parallelism", 4);
    rc.max_retries = get_or<int>(r, "max_retries", 3);
    rc.initial_backoff = std::chrono::milliseconds(get_or<std::int64_t>(r, "backoff_ms", 100));
    rc.timeout = std::chrono::seconds(get_or<std::int64_t>(r, "timeout_s", 60));
    rc.request_token_ids = get_or<bool>(r, "request_token_ids", true);
    if (r.contains("api_key")) rc.api_key = get_or<std::string>(r, "api_key", "");
    c.remote = std::move(rc);
  }

  for (const auto& name : get_or<std::vector<std::string>>(doc, "metrics", {"IRM_SUM"})) {
    auto m = parse_metric(name);
    if (!m) throw ConfigError("unknown metric '" + name + "'");
    if (std::find(c.metrics.begin(), c.metrics.end(), *m) == c.metrics.end()) c.metrics.push_back(*m);
  }
  if (c.metrics.empty()) throw ConfigError("no metrics requested");

  if (doc.contains("tasks")) {
    for (const auto& name : get_or<std::vector<std::string>>(doc, "tasks", {})) {
      auto t = parse_task(name);
      if (!t) throw ConfigError("unknown task '" + name + "'");
      if (std::find(c.tasks.begin(), c.tasks.end(), *t) == c.tasks.end()) c.tasks.push_back(*t);
    }
  } else {
    c.tasks.assign(kAllTasks.begin(), kAllTasks.end());
  }
  if (c.tasks.empty()) throw ConfigError("no tasks requested");

  if (doc.contains("threshold_policy")) {
    const auto& tp = doc["threshold_policy"];
    reject_unknown(tp, {"kind", "value", "path"}, "threshold_policy");
    const auto kind = get_or<std::string>(tp, "kind", "best_f1");
    if (kind == "best_f1") {
      c.threshold_policy.kind = ThresholdPolicyKind::kBestF1;
    } else if (kind == "fixed") {
      if (!tp.contains("value") || !tp["value"].is_number()) throw ConfigError("fixed threshold needs a 'value'");
      c.threshold_policy.kind = ThresholdPolicyKind::kFixed;
      c.threshold_policy.fixed_value = tp["value"].get<double>();
    } else if (kind == "calibration") {
      if (!tp.contains("path")) throw ConfigError("calibration threshold policy needs a 'path'");
      c.threshold_policy.kind = ThresholdPolicyKind::kCalibration;
      c.threshold_policy.calibration_path = resolve(base_dir, get_or<std::string>(tp, "path", ""));
    } else {
      throw ConfigError("unknown threshold policy '" + kind + "'");
    }
  }

  const auto gen = get_or<std::string>(doc, "generalization", "pooled");
  if (gen == "pooled") {
    c.generalization = GeneralizationMode::kPooled;
  } else if (gen == "averaged") {
    c.generalization = GeneralizationMode::kAveragedThresholds;
  } else {
    throw ConfigError("generalization must be 'pooled' or 'averaged'");
  }

  if (doc.contains("length")) {
    const auto& len = doc["length"];
    reject_unknown(len, {"width", "max", "anchor"}, "length");
    c.bucket_width = get_or<int>(len, "width", 20);
    c.bucket_max = get_or<int>(len, "max", 360);
    if (len.contains("anchor")) {
      auto a = parse_length_bucket(get_or<std::string>(len, "anchor", ""));
      if (!a) throw ConfigError("length.anchor must look like \"160-180\"");
      c.anchor = *a;
    }
  }
  if (c.bucket_width <= 0 || c.bucket_max < c.bucket_width) throw ConfigError("invalid length bucket width/max");

  if (doc.contains("sample")) {
    const auto& s = doc["sample"];
    reject_unknown(s, {"n_per_class", "seed"}, "sample");
    SampleSpec spec;
    spec.n_per_class = get_or<std::size_t>(s, "n_per_class", 0);
    spec.seed = get_or<std::uint64_t>(s, "seed", 0);
    if (spec.n_per_class == 0) throw ConfigError("sample.n_per_class must be positive");
    c.sample = spec;
  }

  c.output_dir = resolve(base_dir, get_or<std::string>(doc, "output_dir", "out"));
  c.workers = get_or<int>(doc, "workers", 1);
  c.strict = get_or<bool>(doc, "strict", false);
  c.histogram_bins = get_or<std::size_t>(doc, "histogram_bins", 50);
  if (c.histogram_bins == 0) throw ConfigError("histogram_bins must be positive");
  return c;
}

RunConfig RunConfig::load(const fs::path& file) {
  const auto text = read_text(file, ErrorKind::kConfig);
  return parse(text, file.has_parent_path() ? file.parent_path() : fs::path("."));
}

// ---------------------------------------------------------------------------
// Scores file

std::string to_json_line(const ScoreLine& line) {
  ordered_json o;
  o["text_id"] = line.text_id;
  o["subtask"] = line.subtask;
  o["metric"] = to_string(line.metric);
  o["score"] = line.score;
  o["label"] = to_string(line.label);
  return o.dump();
}

std::vector<ScoreLine> read_scores(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParseError("cannot open scores file '" + file.string() + "'");
  std::vector<ScoreLine> out;
  std::string text;
  std::size_t n = 0;
  while (std::getline(in, text)) {
    ++n;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = file.string() + ": line " + std::to_string(n) + ": ";
    json o;
    try {
      o = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(where + e.what());
    }
    try {
      ScoreLine l;
      l.text_id = o.at("text_id").get<std::string>();
      l.subtask = o.at("subtask").get<std::string>();
      auto m = parse_metric(o.at("metric").get<std::string>());
      auto lab = parse_label(o.at("label").get<std::string>());
      if (!m || !lab) throw ParseError(where + "unknown metric or label");
      l.metric = *m;
      l.label = *lab;
      l.score = o.at("score").get<double>();
      if (!std::isfinite(l.score)) throw ParseError(where + "non-finite score");
      out.push_back(std::move(l));
    } catch (const json::exception& e) {
      throw ParseError(where + e.what());
    }
  }
  return out;
}

void write_scores(const fs::path& file, const std::vector<ScoreLine>& lines) {
  auto out = open_out(file);
  for (const auto& l : lines) out << to_json_line(l) << '\n';
}

std::pair<std::string, std::string> split_subtask_key(std::string_view key) {
  const auto slash = key.find('/');
  if (slash == std::string_view::npos) return {std::string(key), ""};
  return {std::string(key.substr(0, slash)), std::string(key.substr(slash + 1))};
}

// ---------------------------------------------------------------------------
// Calibration file

std::string CalibrationFile::to_json() const {
  ordered_json doc;
  ordered_json metrics_obj = ordered_json::object();
  for (const auto& [m, e] : metrics) {
    ordered_json entry;
    entry["global_threshold"] = e.global_threshold;
    ordered_json buckets = ordered_json::object();
    for (const auto& [b, t] : e.bucket_thresholds) buckets[b.label()] = t;
    entry["bucket_thresholds"] = std::move(buckets);
    if (e.fit) {
      entry["linear_fit"] = ordered_json{{"slope", e.fit->slope}, {"intercept", e.fit->intercept}};
    }
    metrics_obj[std::string(to_string(m))] = std::move(entry);
  }
  doc["metrics"] = std::move(metrics_obj);
  return doc.dump(2) + "\n";
}

CalibrationFile CalibrationFile::parse(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed calibration file: ") + e.what());
  }
  CalibrationFile cal;
  try {
    for (const auto& [name, entry] : doc.at("metrics").items()) {
      auto m = parse_metric(name);
      if (!m) throw ParseError("calibration file: unknown metric '" + name + "'");
      CalibrationEntry e;
      e.global_threshold = entry.at("global_threshold").get<double>();
      if (!std::isfinite(e.global_threshold)) throw ParseError("calibration file: non-finite threshold");
      for (const auto& [label, t] : entry.at("bucket_thresholds").items()) {
        auto b = parse_length_bucket(label);
        if (!b) throw ParseError("calibration file: bad bucket '" + label + "'");
        e.bucket_thresholds[*b] = t.get<double>();
      }
      if (entry.contains("linear_fit")) {
        if (e.bucket_thresholds.size() < 2) {
          throw ParseError("calibration file: linear_fit present with fewer than 2 buckets");
        }
        LinearFit fit;
        fit.slope = entry["linear_fit"].at("slope").get<double>();
        fit.intercept = entry["linear_fit"].at("intercept").get<double>();
        e.fit = fit;
      }
      cal.metrics[*m] = std::move(e);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("calibration file: ") + e.what());
  }
  return cal;
}

CalibrationFile CalibrationFile::load(const fs::path& file) {
  return parse(read_text(file, ErrorKind::kParse));
}

void CalibrationFile::save(const fs::path& file) const {
  auto out = open_out(file);
  out << to_json();
}

// ---------------------------------------------------------------------------
// Commands

ScoreRunSummary cmd_score(const RunConfig& config) {
  ensure_output_dir(config);
  // A failed run must not leave an earlier run's scores behind.
  {
    std::error_code ec;
    fs::remove(config.output_dir / kScoresFile, ec);
  }
  const auto manifest = config.manifest ? std::optional<Manifest>(Manifest::load(*config.manifest))
                                        : std::nullopt;
  auto splits = load_detectrl(config.dataset_root, manifest, config.tasks);

  struct Item {
    const LabeledExample* example;
    std::string subtask;
  };
  std::vector<SubtaskSplit> selected;
  for (auto& s : splits) {
    if (std::find(config.tasks.begin(), config.tasks.end(), s.task) == config.tasks.end()) continue;
    if (config.sample) {
      const auto key = std::string(to_string(s.task)) + "/" + s.subtask;
      selected.push_back(sample_balanced(s, config.sample->n_per_class, config.sample->seed ^ fnv1a(key)));
    } else {
      selected.push_back(std::move(s));
    }
  }
  for (auto t : config.tasks) {
    const bool present = std::any_of(selected.begin(), selected.end(),
                                     [t](const SubtaskSplit& s) { return s.task == t; });
    if (!present) throw DatasetError("requested task '" + std::string(to_string(t)) + "' has no examples");
  }

  std::vector<Item> items;
  for (const auto& s : selected) {
    for (const auto& ex : s.examples) items.push_back({&ex, subtask_key(s, ex, config)});
  }

  // Resolve one sequence per distinct text id, in text-id order.
  std::map<std::string, const LabeledExample*> texts;
  for (const auto& it : items) texts.emplace(it.example->text_id, it.example);

  std::vector<ScoredSequence> seqs;
  if (config.dump_path) {
    DumpOptions opts;
    opts.strict = config.strict;
    auto dumped = load_dump(*config.dump_path, opts);
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < dumped.size(); ++i) {
      if (!by_id.emplace(dumped[i].text_id(), i).second) {
        throw ValidationError("dump has duplicate text_id '" + dumped[i].text_id() + "'");
      }
    }
    std::vector<std::string> missing;
    for (const auto& [id, _] : texts) {
      auto f = by_id.find(id);
      if (f == by_id.end()) {
        missing.push_back(id);
      } else {
        seqs.push_back(dumped[f->second]);
      }
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " selected examples have no records in the dump, e.g.";
      for (std::size_t i = 0; i < std::min<std::size_t>(5, missing.size()); ++i) msg += " '" + missing[i] + "'";
      throw ValidationError(msg);
    }
  } else {
    std::vector<TextInput> inputs;
    inputs.reserve(texts.size());
    for (const auto& [id, ex] : texts) inputs.push_back({id, ex->text});
    RemoteScorer scorer(*config.remote);
    seqs = scorer.fetch_all(inputs, config.remote->max_in_flight);
  }

  std::unordered_map<std::string, std::size_t> seq_index;
  for (std::size_t i = 0; i < seqs.size(); ++i) seq_index.emplace(seqs[i].text_id(), i);

  const auto table = kernels::score_batch(seqs, config.metrics, config.workers);

  std::vector<ScoreLine> lines;
  std::vector<std::pair<std::string, const MetricOutcome*>> failures;
  for (const auto& it : items) {
    const auto& outcomes = table[seq_index.at(it.example->text_id)];
    for (const auto& o : outcomes) {
      if (o.ok()) {
        lines.push_back({it.example->text_id, it.subtask, o.metric, o.score->value, it.example->label});
      } else {
        failures.emplace_back(it.example->text_id, &o);
      }
    }
  }
  std::sort(lines.begin(), lines.end(), line_less);

  const auto scores_path = config.output_dir / kScoresFile;
  const auto incomplete_path = config.output_dir / (std::string(kScoresFile) + ".incomplete");
  const auto errors_path = config.output_dir / "errors.jsonl";
  std::error_code ec;
  if (!failures.empty()) {
    fs::remove(scores_path, ec);
    write_scores(incomplete_path, lines);
    auto err = open_out(errors_path);
    std::set<std::pair<std::string, int>> seen;
    for (const auto& [id, o] : failures) {
      if (!seen.insert({id, metric_order(o->metric)}).second) continue;
      ordered_json e;
      e["text_id"] = id;
      e["metric"] = to_string(o->metric);
      e["kind"] = to_string(*o->error_kind);
      e["message"] = o->error_message;
      err << e.dump() << '\n';
    }
    const auto& first = *failures.front().second;
    throw Error(*first.error_kind, std::to_string(seen.size()) + " metric evaluations failed (first: " +
                                       first.error_message + "); partial scores in " +
                                       incomplete_path.string());
  }
  fs::remove(incomplete_path, ec);
  fs::remove(errors_path, ec);
  write_scores(scores_path, lines);
  return {scores_path, lines.size(), seqs.size()};
}

CalibrationFile cmd_calibrate(const RunConfig& config, const fs::path& scores_path) {
  ensure_output_dir(config);
  const auto grouped = group_scores(read_scores(scores_path));
  if (grouped.empty()) throw DegenerateInputError("scores file is empty");

  CalibrationFile cal;
  for (const auto& [metric, tasks] : grouped) {
    std::vector<LabeledScore> all;
    for (const auto& [_, subs] : tasks) {
      for (const auto& [__, scores] : subs) all.insert(all.end(), scores.begin(), scores.end());
    }
    CalibrationEntry entry;
    entry.global_threshold = best_f1_threshold(all).threshold;

    auto vl = tasks.find(std::string(kTaskVaryingLength));
    if (vl != tasks.end()) {
      const auto buckets = bucketize(vl->second);
      for (const auto& [b, scores] : buckets) {
        if (both_classes(scores)) entry.bucket_thresholds[b] = best_f1_threshold(scores).threshold;
      }
      if (entry.bucket_thresholds.size() >= 2) {
        std::vector<double> xs;
        std::vector<double> ys;
        for (const auto& [b, t] : entry.bucket_thresholds) {
          xs.push_back(b.midpoint());
          ys.push_back(t);
        }
        entry.fit = fit_line(xs, ys);
      }
    }
    cal.metrics[metric] = std::move(entry);
  }
  cal.save(config.output_dir / kCalibrationFile);
  return cal;
}

EvalReport cmd_evaluate(const RunConfig& config, const fs::path& scores_path,
                        const std::optional<CalibrationFile>& calibration_in) {
  ensure_output_dir(config);
  const auto calibration = calibration_for(config, calibration_in);
  const auto grouped = group_scores(read_scores(scores_path));

  std::vector<std::string> missing;
  for (auto m : config.metrics) {
    auto mit = grouped.find(m);
    for (auto t : config.tasks) {
      if (mit == grouped.end() || !mit->second.count(std::string(to_string(t)))) {
        missing.push_back(std::string(to_string(t)) + " (" + std::string(to_string(m)) + ")");
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing subtask scores for:";
    for (const auto& s : missing) msg += " " + s;
    throw DatasetError(msg);
  }

  std::vector<RowJob> jobs;
  for (auto m : config.metrics) {
    const auto threshold = policy_threshold(config, m, calibration);
    for (auto t : config.tasks) {
      const auto& subs = grouped.at(m).at(std::string(to_string(t)));
      for (const auto& [sub, scores] : subs) {
        if (t == Task::kVaryingLength && !both_classes(scores)) continue;
        jobs.push_back({std::string(to_string(t)), sub, m, scores, threshold});
      }
    }
  }
  EvalReport report;
  report.rows = kernels::evaluate_rows(jobs, config.workers);

  auto gen_out = open_out(config.output_dir / "generalization.csv");
  gen_out << "metric,task,subtask,threshold,f1\n";
  auto len_out = open_out(config.output_dir / "length_task.csv");
  len_out << "metric,bucket,train_f1,test_f1\n";

  for (auto m : config.metrics) {
    SummaryRow summary;
    summary.metric = m;
    const auto& by_task = grouped.at(m);
    auto rows_of = [&](std::string_view task) {
      std::vector<EvalRow> rs;
      for (const auto& r : report.rows) {
        if (r.metric == m && r.task == task) rs.push_back(r);
      }
      return rs;
    };
    auto requested = [&](Task t) {
      return std::find(config.tasks.begin(), config.tasks.end(), t) != config.tasks.end();
    };

    struct Robust {
      Task task;
      std::size_t auroc_col;
      std::optional<std::size_t> gen_col;
    };
    const Robust robust[] = {{Task::kMultiDomain, 0, 6},
                             {Task::kMultiLlm, 2, 7},
                             {Task::kMultiAttack, 4, 8},
                             {Task::kHumanWriting, 11, std::nullopt}};
    for (const auto& r : robust) {
      if (!requested(r.task)) continue;
      const auto task_key = std::string(to_string(r.task));
      const auto rows = rows_of(task_key);
      const auto avg = macro_average(rows);
      report.aggregate.push_back(avg);
      summary.cells[r.auroc_col] = avg.auroc;
      summary.cells[r.auroc_col + 1] = avg.f1;
      if (r.gen_col) {
        const auto& subs = by_task.at(task_key);
        if (subs.size() < 2) {
          throw DatasetError("generalization over " + task_key + " needs at least 2 subtasks");
        }
        const auto gen = generalization_eval(subs, config.generalization);
        for (const auto& s : gen.per_subtask) {
          gen_out << to_string(m) << ',' << task_key << ',' << s.subtask << ',' << format_double(s.threshold)
                  << ',' << format_percent(s.f1) << '\n';
        }
        summary.cells[*r.gen_col] = gen.mean_f1;
      }
    }

    if (requested(Task::kVaryingLength)) {
      const auto rows = rows_of(kTaskVaryingLength);
      if (!rows.empty()) report.aggregate.push_back(macro_average(rows));
      const auto buckets = bucketize(by_task.at(std::string(kTaskVaryingLength)));
      const auto lt = length_task_eval(buckets, config.anchor);
      for (const auto& [b, f1] : lt.train_per_bucket) {
        len_out << to_string(m) << ',' << b.label() << ',' << format_percent(f1) << ','
                << format_percent(lt.test_per_bucket.at(b)) << '\n';
      }
      summary.cells[9] = lt.train_f1;
      summary.cells[10] = lt.test_f1;
    }
    summary.finalize_average();
    report.summary.push_back(summary);
  }

  {
    auto out = open_out(config.output_dir / "rows.csv");
    write_rows_csv(out, report);
  }
  {
    auto out = open_out(config.output_dir / "summary.csv");
    write_summary_csv(out, report);
  }
  {
    auto out = open_out(config.output_dir / "summary.md");
    write_summary_markdown(out, report);
  }
  return report;
}

FigureDataSummary cmd_figure_data(const RunConfig& config, const fs::path& scores_path,
                                  const std::optional<CalibrationFile>& calibration_in) {
  const auto fig_dir = config.output_dir / "figures";
  std::error_code ec;
  fs::create_directories(fig_dir, ec);
  if (ec || !fs::is_directory(fig_dir)) throw ConfigError("cannot create '" + fig_dir.string() + "'");

  std::optional<CalibrationFile> calibration = calibration_in;
  if (!calibration && fs::exists(config.output_dir / kCalibrationFile)) {
    calibration = CalibrationFile::load(config.output_dir / kCalibrationFile);
  }

  const auto lines = read_scores(scores_path);
  const auto grouped = group_scores(lines);
  FigureDataSummary summary;

  // (a) score histograms per metric and class.
  {
    const auto path = fig_dir / "score_histograms.csv";
    auto out = open_out(path);
    out << "metric,label,bin,bin_lo,bin_hi,count\n";
    for (const auto& [metric, tasks] : grouped) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto& l : lines) {
        if (l.metric != metric) continue;
        lo = std::min(lo, l.score);
        hi = std::max(hi, l.score);
      }
      const std::size_t bins = hi > lo ? config.histogram_bins : 1;
      std::vector<double> edges(bins + 1);
      for (std::size_t k = 0; k <= bins; ++k) {
        edges[k] = k == bins ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
      }
      for (auto label : {Label::kHuman, Label::kLlm}) {
        std::vector<std::size_t> counts(bins, 0);
        for (const auto& l : lines) {
          if (l.metric != metric || l.label != label) continue;
          auto k = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), l.score) -
                                            edges.begin());
          k = k == 0 ? 0 : std::min(k - 1, bins - 1);
          ++counts[k];
        }
        for (std::size_t k = 0; k < bins; ++k) {
          out << to_string(metric) << ',' << to_string(label) << ',' << k << ',' << format_double(edges[k]) << ','
              << format_double(edges[k + 1]) << ',' << counts[k] << '\n';
        }
      }
    }
    summary.written.push_back(path.string());
  }

  bool any_buckets = false;
  for (const auto& [_, tasks] : grouped) any_buckets = any_buckets || tasks.count(std::string(kTaskVaryingLength));
  if (!any_buckets) {
    summary.notices.push_back("no varying_length scores; skipped length F1 matrix and threshold fit");
    return summary;
  }

  // (b) F1 when bucket i's best threshold is applied to bucket j.
  {
    const auto path = fig_dir / "length_f1_matrix.csv";
    auto out = open_out(path);
    out << "metric,threshold_bucket,eval_bucket,f1\n";
    for (const auto& [metric, tasks] : grouped) {
      auto vl = tasks.find(std::string(kTaskVaryingLength));
      if (vl == tasks.end()) continue;
      const auto buckets = bucketize(vl->second);
      for (const auto& [src, src_scores] : buckets) {
        if (!both_classes(src_scores)) continue;
        const double t = best_f1_threshold(src_scores).threshold;
        for (const auto& [dst, dst_scores] : buckets) {
          if (count_classes(dst_scores).n_llm == 0) continue;
          out << to_string(metric) << ',' << src.label() << ',' << dst.label() << ','
              << format_percent(confusion_at(dst_scores, t).f1) << '\n';
        }
      }
    }
    summary.written.push_back(path.string());
  }

  // (c) (midpoint, threshold, fitted) triples.
  {
    const auto path = fig_dir / "threshold_fit.csv";
    auto out = open_out(path);
    out << "metric,bucket,midpoint,threshold,fitted\n";
    for (const auto& [metric, tasks] : grouped) {
      auto vl = tasks.find(std::string(kTaskVaryingLength));
      if (vl == tasks.end()) continue;
      std::vector<LengthBucket> bs;
      std::vector<double> thresholds;
      LinearFit fit;
      const CalibrationEntry* entry = nullptr;
      if (calibration) {
        auto it = calibration->metrics.find(metric);
        if (it != calibration->metrics.end() && it->second.fit) entry = &it->second;
      }
      if (entry) {
        for (const auto& [b, t] : entry->bucket_thresholds) {
          bs.push_back(b);
          thresholds.push_back(t);
        }
        fit = *entry->fit;
      } else {
        const auto buckets = bucketize(vl->second);
        std::size_t usable = 0;
        for (const auto& [_, s] : buckets) usable += both_classes(s) ? 1 : 0;
        if (usable < 2) {
          summary.notices.push_back(std::string(to_string(metric)) +
                                    ": fewer than 2 calibrated buckets; skipped threshold fit");
          continue;
        }
        auto tf = threshold_length_fit(buckets);
        bs = tf.buckets;
        thresholds = tf.thresholds;
        fit = tf.fit;
      }
      for (std::size_t i = 0; i < bs.size(); ++i) {
        const double mid = bs[i].midpoint();
        out << to_string(metric) << ',' << bs[i].label() << ',' << format_double(mid) << ','
            << format_double(thresholds[i]) << ',' << format_double(fit.slope * mid + fit.intercept) << '\n';
      }
    }
    summary.written.push_back(path.string());
  }
  return summary;
}

StatsReport cmd_validate_dataset(const RunConfig& config) {
  ensure_output_dir(config);
  const auto manifest = config.manifest ? std::optional<Manifest>(Manifest::load(*config.manifest))
                                        : std::nullopt;
  const auto report = validate_stats(load_detectrl(config.dataset_root, manifest));

  ordered_json doc;
  auto entries = [](const std::vector<StatsEntry>& v) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : v) {
      arr.push_back(ordered_json{{"task", e.task}, {"subtask", e.subtask}, {"expected", e.expected},
                                 {"actual", e.actual}});
    }
    return arr;
  };
  doc["matched"] = entries(report.matched);
  doc["mismatches"] = entries(report.mismatches);
  doc["unexpected"] = entries(report.unexpected);
  auto out = open_out(config.output_dir / "dataset_stats.json");
  out << doc.dump(2) << '\n';
  return report;
}

}  // namespace irm
