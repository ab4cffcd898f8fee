// irm-detect: score, calibrate and evaluate zero-shot LLM-text detectors.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "irm/error.hpp"
#include "irm/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::string out_dir;
  bool strict = false;
  int workers = 0;
  std::string scores_path;
  std::string calibration_path;
};

irm::RunConfig load_config(const Globals& g) {
  if (g.config_path.empty()) throw irm::ConfigError("--config is required");
  auto config = irm::RunConfig::load(g.config_path);
  if (!g.out_dir.empty()) config.output_dir = g.out_dir;
  if (g.strict) config.strict = true;
  if (g.workers > 0) config.workers = g.workers;
  return config;
}

fs::path scores_of(const Globals& g, const irm::RunConfig& config) {
  return g.scores_path.empty() ? config.output_dir / "scores.jsonl" : fs::path(g.scores_path);
}

std::optional<irm::CalibrationFile> calibration_of(const Globals& g) {
  if (g.calibration_path.empty()) return std::nullopt;
  return irm::CalibrationFile::load(g.calibration_path);
}

int run_validate(const Globals& g) {
  const auto config = load_config(g);
  const auto report = irm::cmd_validate_dataset(config);
  for (const auto& e : report.matched) {
    std::cout << "ok        " << e.task << '/' << e.subtask << ' ' << e.actual << '\n';
  }
  for (const auto& e : report.mismatches) {
    std::cout << "MISMATCH  " << e.task << '/' << e.subtask << " expected " << e.expected << " got "
              << e.actual << '\n';
  }
  for (const auto& e : report.unexpected) {
    std::cout << "UNEXPECTED " << e.task << '/' << e.subtask << ' ' << e.actual << '\n';
  }
  std::cout << (report.ok() ? "dataset statistics match\n" : "dataset statistics differ\n");
  return (config.strict && !report.ok()) ? irm::exit_code(irm::ErrorKind::kDataset) : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot LLM-generated text detection with implicit reward scores"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config_path, "Run configuration (JSON)");
  app.add_option("--out", g.out_dir, "Output directory (overrides the config)");
  app.add_flag("--strict", g.strict, "Reject unknown dump keys; fail validate-dataset on count mismatches");
  app.add_option("--workers", g.workers, "Worker threads for scoring and evaluation");

  auto* score = app.add_subcommand("score", "Score selected examples with the requested metrics");
  auto* calibrate = app.add_subcommand("calibrate", "Derive best-F1 thresholds and the length fit");
  auto* evaluate = app.add_subcommand("evaluate", "Write per-subtask and task-grid reports");
  auto* figure = app.add_subcommand("figure-data", "Write plot-ready CSV data");
  auto* validate = app.add_subcommand("validate-dataset", "Compare benchmark split sizes with published counts");

  for (auto* sub : {calibrate, evaluate, figure}) {
    sub->add_option("--scores", g.scores_path, "Scores file (default <out>/scores.jsonl)");
  }
  for (auto* sub : {evaluate, figure}) {
    sub->add_option("--calibration", g.calibration_path, "Calibration file");
  }
  for (auto* sub : {score, calibrate, evaluate, figure, validate}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (score->parsed()) {
      const auto config = load_config(g);
      const auto s = irm::cmd_score(config);
      std::cerr << "scored " << s.sequences << " sequences, wrote " << s.lines << " lines to "
                << s.scores_path.string() << '\n';
      return 0;
    }
    if (calibrate->parsed()) {
      const auto config = load_config(g);
      const auto cal = irm::cmd_calibrate(config, scores_of(g, config));
      std::cerr << "calibrated " << cal.metrics.size() << " metrics into "
                << (config.output_dir / "calibration.json").string() << '\n';
      return 0;
    }
    if (evaluate->parsed()) {
      const auto config = load_config(g);
      irm::cmd_evaluate(config, scores_of(g, config), calibration_of(g));
      std::cerr << "reports written to " << config.output_dir.string() << '\n';
      return 0;
    }
    if (figure->parsed()) {
      const auto config = load_config(g);
      const auto s = irm::cmd_figure_data(config, scores_of(g, config), calibration_of(g));
      for (const auto& n : s.notices) std::cerr << "notice: " << n << '\n';
      for (const auto& w : s.written) std::cerr << "wrote " << w << '\n';
      return 0;
    }
    if (validate->parsed()) return run_validate(g);
  } catch (const irm::Error& e) {
    std::cerr << "error (" << irm::to_string(e.kind()) << "): " << e.what() << '\n';
    return irm::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
