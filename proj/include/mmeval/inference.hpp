#pragma once

// Parallel, crash-resumable inference.
//
// Layout: <work_dir>/<model>/<benchmark>/<mode>/{predictions.jsonl, meta.json}
//
// predictions.jsonl holds one JSON object per line:
//   {"sample_index": 3, "variant_id": 0, "model": "...", "benchmark": "...",
//    "response": "..."            (or "error": "<tag>"),
//    "attempt_count": 1, "timestamp": "2026-01-01T00:00:00.000Z"}

#include <atomic>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmeval/dataset.hpp"
#include "mmeval/gateway.hpp"
#include "mmeval/jsonl_log.hpp"

namespace mmeval {

enum class EvalMode { Vanilla, Circular };

std::string_view to_string(EvalMode mode);
EvalMode eval_mode_from_string(std::string_view name);

struct TaskId {
  std::int64_t sample_index = 0;
  int variant_id = 0;

  auto operator<=>(const TaskId&) const = default;
};

std::string to_string(const TaskId& id);

/// Vanilla: one task per record. Circular: one task per option for MCQ
/// records, one task otherwise. Sorted by (sample_index, variant_id).
std::vector<TaskId> plan_tasks(std::span<const BenchmarkRecord> records, EvalMode mode);

struct PredictionRecord {
  std::int64_t sample_index = 0;
  int variant_id = 0;
  std::string model;
  std::string benchmark;
  std::optional<std::string> response;
  std::optional<std::string> error;
  int attempt_count = 0;
  std::string timestamp;

  TaskId task() const { return {sample_index, variant_id}; }
  // Equality on content, ignoring timing and attempt bookkeeping.
  bool same_outcome(const PredictionRecord& other) const;
};

nlohmann::json to_json(const PredictionRecord& record);
PredictionRecord prediction_from_json(const nlohmann::json& j);

struct RunLayout {
  std::filesystem::path dir;

  std::filesystem::path predictions() const { return dir / "predictions.jsonl"; }
  std::filesystem::path meta() const { return dir / "meta.json"; }
  std::filesystem::path extractions() const { return dir / "extractions.jsonl"; }
  std::filesystem::path report() const { return dir / "report.json"; }
};

RunLayout run_layout(const std::filesystem::path& work_dir, std::string_view model,
                     std::string_view benchmark, EvalMode mode);

class FingerprintMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Durable prediction log for one (model, benchmark, mode) run.
class RunState {
 public:
  struct Options {
    std::string model;
    std::string benchmark;
    EvalMode mode = EvalMode::Vanilla;
    std::string tsv_fingerprint;
    nlohmann::json config_snapshot = nlohmann::json::object();
    bool retry_failed = false;
  };

  /// Opens (or creates) the run directory. Writes meta.json on first use and
  /// refuses to continue when the TSV fingerprint changed. Replays the log,
  /// dropping a torn final line. Throws CorruptLog for unparseable middle
  /// lines, foreign model/benchmark names, unknown or duplicate task ids.
  static RunState open(const std::filesystem::path& work_dir, const Options& options,
                       std::span<const TaskId> tasks);

  const RunLayout& layout() const { return layout_; }
  const Options& options() const { return options_; }
  const std::set<TaskId>& pending() const { return pending_; }
  const std::vector<PredictionRecord>& records() const { return records_; }
  bool repaired_torn_tail() const { return log_.repaired_torn_tail(); }
  bool complete() const { return pending_.empty(); }

  void append(PredictionRecord record);
  void append_torn(std::string_view bytes) { log_.append_torn(bytes); }

 private:
  RunState(RunLayout layout, Options options, JsonlLog log);

  RunLayout layout_;
  Options options_;
  JsonlLog log_;
  std::vector<PredictionRecord> records_;
  std::set<TaskId> pending_;
};

using RequestBuilder = std::function<GenerateRequest(const TaskId&)>;

struct EngineOptions {
  std::size_t workers = 1;
  RetryPolicy retry;
  RateLimiter* limiter = nullptr;
  // Test hook emulating a crash: once this many records have been persisted
  // by this invocation, nothing more is written and in-flight results are
  // dropped. With `tear_on_crash` a partial line is left behind as well.
  std::optional<std::size_t> crash_after;
  bool tear_on_crash = false;
};

struct RunStats {
  std::size_t dispatched = 0;  // adapter invocations via generate()
  std::size_t persisted = 0;
  std::size_t failed = 0;  // persisted with an error tag
  bool interrupted = false;
};

/// Dispatches every pending task to `adapter` from a shared queue consumed by
/// `workers` threads; a single writer appends results to the log as they
/// complete. Per-task failures are recorded, not thrown.
RunStats run(RunState& state, ModelAdapter& adapter, const RequestBuilder& build,
             const EngineOptions& options);

/// Reopens the run in `work_dir` and runs whatever is still pending.
RunStats resume(const std::filesystem::path& work_dir, const RunState::Options& state_options,
                std::span<const TaskId> tasks, ModelAdapter& adapter, const RequestBuilder& build,
                const EngineOptions& options);

}  // namespace mmeval
