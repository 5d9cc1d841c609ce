// mmeval: run, validate and report multi-modal model evaluations.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmeval/pipeline.hpp"
#include "mmeval/text.hpp"

namespace {

std::map<std::string, mmeval::Normalization> parse_scales(const std::vector<std::string>& specs) {
  std::map<std::string, mmeval::Normalization> scales;
  for (const auto& spec : specs) {
    const auto eq = spec.rfind('=');
    const auto colon = spec.rfind(':');
    if (eq == std::string::npos || colon == std::string::npos || colon < eq) {
      throw mmeval::ConfigError("--scale expects <benchmark>=<min>:<max>, got '" + spec + "'");
    }
    mmeval::Normalization n{std::stod(spec.substr(eq + 1, colon - eq - 1)), std::stod(spec.substr(colon + 1))};
    if (!(n.raw_max > n.raw_min)) throw mmeval::ConfigError("--scale range must have max > min: " + spec);
    scales[spec.substr(0, eq)] = n;
  }
  return scales;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluate multi-modal models on benchmark TSV files"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Infer, extract, score and write the leaderboard");
  std::string config_path;
  std::vector<std::string> models, data, formats;
  std::string work_dir, mode, judge;
  long long nproc = 0;
  int retry_budget = 0;
  double rpm = -1;
  bool retry_failed = false;
  run->add_option("--config", config_path, "JSON config file; flags override its keys")->check(CLI::ExistingFile);
  run->add_option("--model", models, "Model spec (repeatable)");
  run->add_option("--data", data, "Benchmark TSV (repeatable); manifest <stem>.manifest is picked up");
  run->add_option("--work-dir", work_dir, "Output directory");
  run->add_option("--mode", mode, "vanilla or circular")->check(CLI::IsMember({"vanilla", "circular"}));
  run->add_option("--nproc", nproc, "Concurrent requests per model (W)");
  run->add_option("--judge", judge, "none, stub:<name> or http:<endpoint>");
  run->add_flag("--retry-failed", retry_failed, "Re-dispatch tasks logged as failures");
  run->add_option("--format", formats, "tsv, md, json (repeatable)");
  run->add_option("--retry-budget", retry_budget, "Attempts per request");
  run->add_option("--rpm", rpm, "Requests per minute per model; 0 = unlimited");

  // validate
  auto* validate = app.add_subcommand("validate", "Check benchmark TSV files");
  std::vector<std::string> validate_paths;
  validate->add_option("paths", validate_paths, "TSV files")->required();

  // report
  auto* report = app.add_subcommand("report", "Rebuild reports and leaderboard from logs");
  std::string report_dir;
  std::vector<std::string> report_formats;
  report->add_option("--work-dir", report_dir, "Work directory of a previous run")->required();
  report->add_option("--format", report_formats, "tsv, md, json (repeatable)");

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "Rank models from a table of raw scores");
  std::string scores_path;
  std::vector<std::string> scale_specs;
  std::string aggregate_format = "md";
  aggregate->add_option("scores", scores_path, "TSV: model, [param], one column per benchmark")
      ->required()
      ->check(CLI::ExistingFile);
  aggregate->add_option("--scale", scale_specs, "Raw range of a benchmark, <name>=<min>:<max>");
  aggregate->add_option("--format", aggregate_format, "tsv, md or json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      mmeval::RunConfig config;
      if (!config_path.empty()) config = mmeval::load_run_config(config_path);
      if (!models.empty()) config.models = models;
      if (!data.empty()) {
        config.benchmarks.clear();
        for (const auto& d : data) config.benchmarks.push_back({d, std::nullopt});
      }
      if (!work_dir.empty()) config.work_dir = work_dir;
      if (!mode.empty()) config.mode = mmeval::eval_mode_from_string(mode);
      if (run->count("--nproc")) {
        if (nproc < 1) throw mmeval::ConfigError("--nproc must be >= 1");
        config.workers = static_cast<std::size_t>(nproc);
      }
      if (!judge.empty()) config.judge = judge;
      if (retry_failed) config.retry_failed = true;
      if (run->count("--retry-budget")) config.retry_budget = retry_budget;
      if (run->count("--rpm")) config.rate_limit_rpm = rpm;
      if (!formats.empty()) {
        config.formats.clear();
        for (const auto& f : formats) config.formats.push_back(mmeval::report_format_from_string(f));
      }
      return mmeval::cmd_run(config, std::cout);
    }
    if (*validate) {
      std::vector<std::filesystem::path> paths(validate_paths.begin(), validate_paths.end());
      return mmeval::cmd_validate(paths, std::cout);
    }
    if (*report) {
      std::optional<std::vector<mmeval::ReportFormat>> fs;
      if (!report_formats.empty()) {
        fs.emplace();
        for (const auto& f : report_formats) fs->push_back(mmeval::report_format_from_string(f));
      }
      return mmeval::cmd_report(report_dir, std::cout, fs);
    }
    if (*aggregate) {
      return mmeval::cmd_aggregate(scores_path, parse_scales(scale_specs),
                                   mmeval::report_format_from_string(aggregate_format), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mmeval::kExitConfig;
  }
  return mmeval::kExitConfig;
}
