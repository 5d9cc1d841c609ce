#include "mmeval/inference.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "mmeval/text.hpp"

namespace mmeval {
namespace {

using nlohmann::json;

std::string safe_component(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '-';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

}  // namespace

std::string_view to_string(EvalMode mode) {
  return mode == EvalMode::Vanilla ? "vanilla" : "circular";
}

EvalMode eval_mode_from_string(std::string_view name) {
  if (name == "vanilla") return EvalMode::Vanilla;
  if (name == "circular") return EvalMode::Circular;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "' (vanilla|circular)");
}

std::string to_string(const TaskId& id) {
  return std::to_string(id.sample_index) + "/" + std::to_string(id.variant_id);
}

std::vector<TaskId> plan_tasks(std::span<const BenchmarkRecord> records, EvalMode mode) {
  std::vector<TaskId> tasks;
  for (const auto& r : records) {
    const int variants =
        mode == EvalMode::Circular && r.is_mcq() ? static_cast<int>(r.choices.size()) : 1;
    for (int v = 0; v < variants; ++v) tasks.push_back({r.index, v});
  }
  std::sort(tasks.begin(), tasks.end());
  return tasks;
}

bool PredictionRecord::same_outcome(const PredictionRecord& o) const {
  return sample_index == o.sample_index && variant_id == o.variant_id && model == o.model &&
         benchmark == o.benchmark && response == o.response && error == o.error;
}

json to_json(const PredictionRecord& r) {
  json j = {{"sample_index", r.sample_index},
            {"variant_id", r.variant_id},
            {"model", r.model},
            {"benchmark", r.benchmark}};
  if (r.response) j["response"] = *r.response;
  if (r.error) j["error"] = *r.error;
  j["attempt_count"] = r.attempt_count;
  j["timestamp"] = r.timestamp;
  return j;
}

PredictionRecord prediction_from_json(const json& j) {
  PredictionRecord r;
  r.sample_index = j.at("sample_index").get<std::int64_t>();
  r.variant_id = j.at("variant_id").get<int>();
  r.model = j.at("model").get<std::string>();
  r.benchmark = j.at("benchmark").get<std::string>();
  if (j.contains("response")) r.response = j["response"].get<std::string>();
  if (j.contains("error")) r.error = j["error"].get<std::string>();
  if (r.response.has_value() == r.error.has_value()) {
    throw std::invalid_argument("exactly one of response/error must be present");
  }
  r.attempt_count = j.value("attempt_count", 0);
  r.timestamp = j.value("timestamp", std::string());
  return r;
}

RunLayout run_layout(const std::filesystem::path& work_dir, std::string_view model,
                     std::string_view benchmark, EvalMode mode) {
  return {work_dir / safe_component(model) / safe_component(benchmark) / std::string(to_string(mode))};
}

RunState::RunState(RunLayout layout, Options options, JsonlLog log)
    : layout_(std::move(layout)), options_(std::move(options)), log_(std::move(log)) {}

RunState RunState::open(const std::filesystem::path& work_dir, const Options& options,
                        std::span<const TaskId> tasks) {
  auto layout = run_layout(work_dir, options.model, options.benchmark, options.mode);
  std::filesystem::create_directories(layout.dir);

  if (std::filesystem::exists(layout.meta())) {
    const json meta = json::parse(read_file(layout.meta()), nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) {
      throw CorruptLog(layout.meta(), 1, "meta.json is not a JSON object");
    }
    const auto recorded = meta.value("tsv_fingerprint", std::string());
    if (recorded != options.tsv_fingerprint) {
      throw FingerprintMismatch("benchmark file for " + options.benchmark +
                                " changed since the run started (fingerprint " + recorded +
                                " -> " + options.tsv_fingerprint + ")");
    }
  } else {
    const json meta = {{"model", options.model},
                       {"benchmark", options.benchmark},
                       {"mode", to_string(options.mode)},
                       {"tsv_fingerprint", options.tsv_fingerprint},
                       {"task_count", tasks.size()},
                       {"config", options.config_snapshot}};
    write_file_atomic(layout.meta(), meta.dump(2) + "\n");
  }

  RunState state(layout, options, JsonlLog::open(layout.predictions()));
  const std::set<TaskId> planned(tasks.begin(), tasks.end());
  std::set<TaskId> seen;
  bool dropped_failures = false;
  const auto& rows = state.log_.rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    PredictionRecord rec;
    try {
      rec = prediction_from_json(rows[i]);
    } catch (const std::exception& e) {
      throw CorruptLog(layout.predictions(), i + 1, e.what());
    }
    if (rec.model != options.model || rec.benchmark != options.benchmark) {
      throw CorruptLog(layout.predictions(), i + 1,
                       "record belongs to " + rec.model + "/" + rec.benchmark);
    }
    if (!planned.contains(rec.task())) {
      throw CorruptLog(layout.predictions(), i + 1, "unknown task " + to_string(rec.task()));
    }
    if (!seen.insert(rec.task()).second) {
      throw CorruptLog(layout.predictions(), i + 1, "duplicate task " + to_string(rec.task()));
    }
    if (options.retry_failed && rec.error) {
      seen.erase(rec.task());
      dropped_failures = true;
      continue;
    }
    state.records_.push_back(std::move(rec));
  }
  if (dropped_failures) {
    std::vector<json> kept;
    for (const auto& r : state.records_) kept.push_back(to_json(r));
    state.log_.rewrite(kept);
  }
  for (const auto& t : planned) {
    if (!seen.contains(t)) state.pending_.insert(t);
  }
  return state;
}

void RunState::append(PredictionRecord record) {
  if (!pending_.contains(record.task())) {
    throw std::logic_error("task " + to_string(record.task()) + " is not pending");
  }
  log_.append(to_json(record));
  pending_.erase(record.task());
  records_.push_back(std::move(record));
}

RunStats run(RunState& state, ModelAdapter& adapter, const RequestBuilder& build,
             const EngineOptions& options) {
  RunStats stats;
  const std::vector<TaskId> work(state.pending().begin(), state.pending().end());
  if (work.empty()) return stats;

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, work.size()));

  // Guarded by mu. `outstanding` counts tasks taken from the queue but not
  // yet persisted (or dropped); it never exceeds n_workers, which bounds the
  // work lost to a crash.
  std::mutex mu;
  std::condition_variable results_cv;
  std::condition_variable slots_cv;
  std::deque<PredictionRecord> done;
  std::size_t next = 0;
  std::size_t outstanding = 0;
  std::size_t finished_workers = 0;
  bool stop = false;
  std::atomic<std::size_t> dispatched{0};

  const auto& opts = state.options();
  auto worker = [&] {
    while (true) {
      std::size_t i = 0;
      {
        std::unique_lock lock(mu);
        slots_cv.wait(lock, [&] { return stop || outstanding < n_workers; });
        if (stop || next >= work.size()) break;
        i = next++;
        ++outstanding;
      }
      PredictionRecord rec;
      rec.sample_index = work[i].sample_index;
      rec.variant_id = work[i].variant_id;
      rec.model = opts.model;
      rec.benchmark = opts.benchmark;
      try {
        const GenerateRequest request = build(work[i]);
        dispatched.fetch_add(1);
        const auto response = generate(adapter, request, options.retry, options.limiter);
        rec.response = response.text;
        rec.attempt_count = response.attempt_count;
      } catch (const GatewayError& e) {
        rec.error = e.tag();
        rec.attempt_count = e.attempts();
      } catch (const std::exception& e) {
        rec.error = std::string(to_string(FailureKind::Permanent)) + ": " + e.what();
        rec.attempt_count = 1;
      }
      rec.timestamp = text::utc_timestamp_now();
      {
        std::lock_guard lock(mu);
        done.push_back(std::move(rec));
      }
      results_cv.notify_one();
    }
    {
      std::lock_guard lock(mu);
      ++finished_workers;
    }
    results_cv.notify_one();
  };

  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);

  // This thread is the single log writer.
  std::exception_ptr failure;
  bool crashed = false;
  {
    std::unique_lock lock(mu);
    while (true) {
      results_cv.wait(lock, [&] { return !done.empty() || finished_workers == n_workers; });
      if (done.empty()) break;
      PredictionRecord rec = std::move(done.front());
      done.pop_front();
      if (!crashed && !failure) {
        lock.unlock();
        try {
          const bool failed = rec.error.has_value();
          state.append(std::move(rec));
          ++stats.persisted;
          if (failed) ++stats.failed;
          if (options.crash_after && stats.persisted >= *options.crash_after) {
            crashed = true;
            if (options.tear_on_crash) state.append_torn("{\"sample_index\": 0, \"vari");
          }
        } catch (...) {
          failure = std::current_exception();
        }
        lock.lock();
        if (crashed || failure) stop = true;
      }
      --outstanding;
      slots_cv.notify_all();
    }
  }
  for (auto& t : threads) t.join();
  stats.dispatched = dispatched.load();
  stats.interrupted = crashed;
  if (failure) std::rethrow_exception(failure);
  return stats;
}

RunStats resume(const std::filesystem::path& work_dir, const RunState::Options& state_options,
                std::span<const TaskId> tasks, ModelAdapter& adapter, const RequestBuilder& build,
                const EngineOptions& options) {
  RunState state = RunState::open(work_dir, state_options, tasks);
  return run(state, adapter, build, options);
}

}  // namespace mmeval
