#pragma once

// Whole-pipeline orchestration behind the `mmeval` command.
//
// Config file keys (JSON; every key optional, flags override):
//   models          list of adapter specs: echo | oracle | verbose-oracle |
//                   uniform-random:<seed> | replay:<predictions.jsonl> | http:<endpoint>
//   benchmarks      list of TSV paths, or {"tsv": path, "manifest": path}
//   mode            "vanilla" | "circular"
//   workers         W >= 1
//   judge           "none" | "stub:<name>" | "http:<endpoint>"
//   work_dir        output root
//   retry_budget    attempts per request (>= 1)
//   rate_limit_rpm  requests per minute per adapter, 0 = unlimited
//   retry_failed    re-dispatch tasks whose logged outcome is an error
//   formats         subset of ["tsv", "md", "json"]
//   endpoints       {"<name>": {"url": ..., "model": ..., "max_images": n,
//                                "supports_interleave": bool, "timeout_ms": n}}
//
// Credentials are read from MMEVAL_API_KEY / MMEVAL_JUDGE_API_KEY only; a
// config that carries an api key is rejected.

#include <chrono>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmeval/dataset.hpp"
#include "mmeval/evaluation.hpp"
#include "mmeval/gateway.hpp"
#include "mmeval/http_chat.hpp"
#include "mmeval/inference.hpp"
#include "mmeval/judge.hpp"
#include "mmeval/report.hpp"

namespace mmeval {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitIncomplete = 2, kExitCorrupt = 3 };

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BenchmarkSpec {
  std::filesystem::path tsv;
  std::optional<std::filesystem::path> manifest;
};

struct EndpointSpec {
  HttpEndpoint endpoint;
  bool supports_interleave = true;
  std::optional<std::size_t> max_images;
};

struct RunConfig {
  std::vector<std::string> models;
  std::vector<BenchmarkSpec> benchmarks;
  EvalMode mode = EvalMode::Vanilla;
  std::size_t workers = 1;
  std::string judge = "none";
  std::filesystem::path work_dir = "mmeval_work";
  int retry_budget = 5;
  double rate_limit_rpm = 0.0;
  bool retry_failed = false;
  std::vector<ReportFormat> formats{ReportFormat::Tsv, ReportFormat::Markdown, ReportFormat::Json};
  std::map<std::string, EndpointSpec> endpoints;
  // Backoff base delay; tests shorten it.
  std::chrono::milliseconds retry_base_delay{500};
  // Crash emulation passed through to the engine for each pair; tests only.
  std::optional<std::size_t> crash_after;
  bool tear_on_crash = false;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Checks W >= 1, benchmark files exist, model specs are known and
/// circular mode only meets MCQ benchmarks. Throws ConfigError.
void check_run_config(const RunConfig& config);

/// Directory name used for a model spec.
std::string model_dir_name(std::string_view spec);

using AdapterFactory = std::function<std::unique_ptr<ModelAdapter>(
    const std::string& spec, std::span<const BenchmarkRecord> records)>;

/// Mocks plus `http:<endpoint>` adapters.
std::unique_ptr<ModelAdapter> make_adapter(const RunConfig& config, const std::string& spec,
                                           std::span<const BenchmarkRecord> records);

std::unique_ptr<JudgeClient> make_judge(const RunConfig& config);

/// Request for one task: the rotated record, the adapter's prompt override
/// or the default prompt, and the benchmark name.
GenerateRequest build_request(const ModelAdapter& adapter, const Benchmark& benchmark,
                              const BenchmarkRecord& record, const TaskId& task);

/// Full pipeline. Returns the exit code; progress and per-pair failures go
/// to `out`.
int cmd_run(const RunConfig& config, std::ostream& out, const AdapterFactory& factory = {},
            JudgeClient* judge_override = nullptr);

/// Exit 0 iff every file validates cleanly; diagnostics go to `out`.
int cmd_validate(std::span<const std::filesystem::path> paths, std::ostream& out);

/// Rebuilds per-pair reports and the leaderboard from the logs in
/// `work_dir` without contacting any model or judge.
int cmd_report(const std::filesystem::path& work_dir, std::ostream& out,
               std::optional<std::vector<ReportFormat>> formats = std::nullopt);

/// Leaderboard from a score table: columns `model`, optional `param`, then
/// one column per benchmark holding raw scores. `scales` maps benchmark
/// names to their raw range (identity otherwise).
Leaderboard leaderboard_from_scores_tsv(std::string_view tsv,
                                        const std::map<std::string, Normalization>& scales);

int cmd_aggregate(const std::filesystem::path& scores_tsv,
                  const std::map<std::string, Normalization>& scales, ReportFormat format,
                  std::ostream& out);

/// Recomputes every pair listed in <work_dir>/run.json from its logs.
/// Throws IncompletePredictions-style PairIncomplete naming the pair.
class PairIncomplete : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Leaderboard leaderboard_from_work_dir(const std::filesystem::path& work_dir);

}  // namespace mmeval
