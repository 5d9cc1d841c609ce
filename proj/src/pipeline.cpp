#include "mmeval/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "mmeval/jsonl_log.hpp"
#include "mmeval/mocks.hpp"
#include "mmeval/text.hpp"

namespace mmeval {
namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr std::string_view kRunFile = "run.json";

const std::set<std::string> kConfigKeys{"models",       "benchmarks",     "mode",
                                        "workers",      "judge",          "work_dir",
                                        "retry_budget", "rate_limit_rpm", "retry_failed",
                                        "formats",      "endpoints"};

bool looks_like_secret(const std::string& key) {
  const auto k = text::to_lower(key);
  return k.find("key") != std::string::npos || k.find("token") != std::string::npos ||
         k.find("secret") != std::string::npos || k.find("authorization") != std::string::npos ||
         k.find("password") != std::string::npos;
}

template <typename T>
T get_or_throw(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::string response_fingerprint(const PredictionRecord& p) {
  const std::string payload = p.response ? "r:" + *p.response : "e:" + p.error.value_or("");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(text::fnv1a(payload)));
  return buf;
}

struct LoadedBenchmark {
  BenchmarkSpec spec;
  Benchmark bench;
  std::string fingerprint;
};

LoadedBenchmark load_checked(const BenchmarkSpec& spec, EvalMode mode) {
  LoadedBenchmark out{spec, open_benchmark(spec.tsv, spec.manifest), text::sha256_hex(read_file(spec.tsv))};
  for (const auto& r : out.bench.records) classify_question_type(out.bench.meta, r);
  if (mode == EvalMode::Circular && out.bench.meta.question_type != QuestionType::Mcq) {
    throw ConfigError("circular mode needs MCQ benchmarks; " + out.bench.meta.name + " is " +
                      std::string(to_string(out.bench.meta.question_type)));
  }
  return out;
}

std::string pair_name(std::string_view model, std::string_view benchmark) {
  return std::string(model) + " x " + std::string(benchmark);
}

RunState::Options state_options(const std::string& model, const LoadedBenchmark& lb, EvalMode mode,
                                json snapshot, bool retry_failed) {
  RunState::Options o;
  o.model = model;
  o.benchmark = lb.bench.meta.name;
  o.mode = mode;
  o.tsv_fingerprint = lb.fingerprint;
  o.config_snapshot = std::move(snapshot);
  o.retry_failed = retry_failed;
  return o;
}

// Valid extraction rows for the current predictions. Stale or duplicate rows
// are dropped from the file.
std::map<TaskId, TaskEvaluation> load_extractions(JsonlLog& log,
                                                  const std::map<TaskId, const PredictionRecord*>& preds) {
  std::map<TaskId, TaskEvaluation> out;
  std::vector<json> kept;
  bool dirty = false;
  for (const auto& row : log.rows()) {
    try {
      auto ev = task_evaluation_from_json(row);
      const auto it = preds.find(ev.task);
      if (it == preds.end() || row.value("response_fingerprint", std::string()) !=
                                   response_fingerprint(*it->second) ||
          out.contains(ev.task)) {
        dirty = true;
        continue;
      }
      out.emplace(ev.task, std::move(ev));
      kept.push_back(row);
    } catch (const std::exception&) {
      dirty = true;
    }
  }
  if (dirty) log.rewrite(kept);
  return out;
}

const BenchmarkRecord& record_by_index(const Benchmark& bench, std::int64_t index) {
  for (const auto& r : bench.records) {
    if (r.index == index) return r;
  }
  throw std::out_of_range("no record " + std::to_string(index));
}

// Fills in extractions for tasks that have none yet.
void extract_missing(const RunLayout& layout, const Benchmark& bench,
                     const std::vector<PredictionRecord>& predictions, JudgeClient* judge,
                     std::size_t workers, const RetryPolicy& policy) {
  std::map<TaskId, const PredictionRecord*> by_task;
  for (const auto& p : predictions) by_task[p.task()] = &p;
  auto log = JsonlLog::open(layout.extractions());
  const auto existing = load_extractions(log, by_task);

  std::vector<const PredictionRecord*> todo;
  for (const auto& [task, p] : by_task) {
    if (!existing.contains(task)) todo.push_back(p);
  }
  if (todo.empty()) return;

  std::vector<std::optional<TaskEvaluation>> results(todo.size());
  std::atomic<std::size_t> next{0};
  std::mutex failure_mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        const auto& p = *todo[i];
        const auto& base = record_by_index(bench, p.sample_index);
        const auto variant = record_for_variant(base, p.variant_id);
        results[i] = evaluate_prediction(p, variant, classify_question_type(bench.meta, base),
                                         judge, policy);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, todo.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < n; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < todo.size(); ++i) {
    json row = to_json(*results[i]);
    row["response_fingerprint"] = response_fingerprint(*todo[i]);
    log.append(row);
  }
}

struct PairScore {
  MetricEntry entry;
  std::string report;  // report.json bytes
};

// Scores one pair from its logs only. Throws PairIncomplete when a log is
// missing or short.
PairScore score_pair(const std::filesystem::path& work_dir, const std::string& model,
                     const LoadedBenchmark& lb, EvalMode mode) {
  const auto& bench = lb.bench;
  const auto layout = run_layout(work_dir, model, bench.meta.name, mode);
  const auto name = pair_name(model, bench.meta.name);
  if (!std::filesystem::exists(layout.meta()) || !std::filesystem::exists(layout.predictions())) {
    throw PairIncomplete(name + ": no prediction log");
  }
  const auto tasks = plan_tasks(bench.records, mode);
  auto state = RunState::open(work_dir, state_options(model, lb, mode, json::object(), false), tasks);
  if (!state.complete()) {
    throw PairIncomplete(name + ": " + std::to_string(state.pending().size()) +
                         " tasks without predictions");
  }
  std::map<TaskId, const PredictionRecord*> by_task;
  for (const auto& p : state.records()) by_task[p.task()] = &p;
  std::map<TaskId, TaskEvaluation> evals;
  {
    auto log = JsonlLog::open(layout.extractions());
    evals = load_extractions(log, by_task);
  }
  if (evals.size() != tasks.size()) {
    throw PairIncomplete(name + ": " + std::to_string(tasks.size() - evals.size()) +
                         " tasks without extractions");
  }
  std::vector<TaskEvaluation> ordered;
  ordered.reserve(evals.size());
  std::map<std::string, int> methods{{"EXACT", 0}, {"LLM", 0}, {"FAILED", 0}};
  for (auto& [_, ev] : evals) {
    ++methods[std::string(to_string(ev.method))];
    ordered.push_back(std::move(ev));
  }
  std::size_t errors = 0;
  for (const auto& p : state.records()) errors += p.error ? 1 : 0;

  const auto score = aggregate_scores(ordered, bench.records, mode);
  const auto& norm = bench.meta.normalization;
  // Scorers yield a fraction of the benchmark's full credit; express it on
  // the declared raw scale first, then normalize.
  const double raw = norm.raw_min + score.raw / 100.0 * (norm.raw_max - norm.raw_min);
  const double normalized = std::clamp(normalize(std::clamp(raw, norm.raw_min, norm.raw_max), norm), 0.0, 100.0);

  ojson report;
  report["schema_version"] = 1;
  report["model"] = model;
  report["benchmark"] = bench.meta.name;
  report["mode"] = to_string(mode);
  report["question_type"] = to_string(bench.meta.question_type);
  report["samples"] = score.samples;
  report["tasks"] = tasks.size();
  report["prediction_errors"] = errors;
  report["extraction"] = methods;
  report["raw"] = raw;
  report["normalized"] = normalized;
  report["per_category"] = score.per_category;
  return {{bench.meta.name, raw, normalized}, report.dump(2) + "\n"};
}

ojson run_manifest(const RunConfig& config, const std::vector<LoadedBenchmark>& benches) {
  ojson j;
  j["schema_version"] = 1;
  j["mode"] = to_string(config.mode);
  auto models = ojson::array();
  for (const auto& m : config.models) models.push_back({{"spec", m}, {"name", model_dir_name(m)}});
  j["models"] = models;
  auto bs = ojson::array();
  for (const auto& lb : benches) {
    ojson b;
    b["name"] = lb.bench.meta.name;
    b["tsv"] = std::filesystem::absolute(lb.spec.tsv).lexically_normal().string();
    if (lb.spec.manifest) {
      b["manifest"] = std::filesystem::absolute(*lb.spec.manifest).lexically_normal().string();
    } else {
      b["manifest"] = nullptr;
    }
    bs.push_back(b);
  }
  j["benchmarks"] = bs;
  auto formats = ojson::array();
  for (auto f : config.formats) formats.push_back(file_extension(f));
  j["formats"] = formats;
  return j;
}

struct RunManifest {
  EvalMode mode = EvalMode::Vanilla;
  std::vector<std::string> model_names;
  std::vector<BenchmarkSpec> benchmarks;
  std::vector<ReportFormat> formats;
};

RunManifest read_run_manifest(const std::filesystem::path& work_dir) {
  const auto path = work_dir / kRunFile;
  if (!std::filesystem::exists(path)) {
    throw ConfigError(path.string() + " not found; is this a work directory?");
  }
  const json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  RunManifest m;
  try {
    m.mode = eval_mode_from_string(j.at("mode").get<std::string>());
    for (const auto& model : j.at("models")) m.model_names.push_back(model.at("name").get<std::string>());
    for (const auto& b : j.at("benchmarks")) {
      BenchmarkSpec spec{b.at("tsv").get<std::string>(), std::nullopt};
      if (b.contains("manifest") && !b["manifest"].is_null()) {
        spec.manifest = b["manifest"].get<std::string>();
      }
      m.benchmarks.push_back(std::move(spec));
    }
    for (const auto& f : j.at("formats")) m.formats.push_back(report_format_from_string(f.get<std::string>()));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return m;
}

void write_leaderboard(const Leaderboard& board, const std::filesystem::path& work_dir,
                       std::span<const ReportFormat> formats, std::ostream& out) {
  for (auto f : formats) out << "wrote " << emit_to_file(board, f, work_dir).string() << "\n";
}

Leaderboard rank(std::vector<MetricReport> reports, const std::vector<LoadedBenchmark>& benches) {
  std::vector<std::string> columns;
  for (const auto& lb : benches) columns.push_back(lb.bench.meta.name);
  return average_and_rank(std::move(reports), columns);
}

MetricReport metric_report(const std::string& model, std::vector<MetricEntry> entries) {
  MetricReport r;
  r.model = model;
  r.entries = std::move(entries);
  double sum = 0.0;
  for (const auto& e : r.entries) sum += e.normalized;
  r.average = r.entries.empty() ? 0.0 : sum / static_cast<double>(r.entries.size());
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (looks_like_secret(key)) {
      throw ConfigError("config key '" + key + "' looks like a credential; use MMEVAL_API_KEY / MMEVAL_JUDGE_API_KEY");
    }
    if (!kConfigKeys.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig c;
  if (j.contains("models")) c.models = get_or_throw<std::vector<std::string>>(j, "models");
  if (j.contains("benchmarks")) {
    for (const auto& b : j["benchmarks"]) {
      if (b.is_string()) {
        c.benchmarks.push_back({b.get<std::string>(), std::nullopt});
      } else if (b.is_object() && b.contains("tsv")) {
        BenchmarkSpec spec{get_or_throw<std::string>(b, "tsv"), std::nullopt};
        if (b.contains("manifest")) spec.manifest = get_or_throw<std::string>(b, "manifest");
        c.benchmarks.push_back(std::move(spec));
      } else {
        throw ConfigError("benchmarks entries are paths or {\"tsv\": ..., \"manifest\": ...}");
      }
    }
  }
  try {
    if (j.contains("mode")) c.mode = eval_mode_from_string(get_or_throw<std::string>(j, "mode"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("workers")) {
    const auto w = get_or_throw<long long>(j, "workers");
    if (w < 1) throw ConfigError("workers must be >= 1");
    c.workers = static_cast<std::size_t>(w);
  }
  if (j.contains("judge")) c.judge = get_or_throw<std::string>(j, "judge");
  if (j.contains("work_dir")) c.work_dir = get_or_throw<std::string>(j, "work_dir");
  if (j.contains("retry_budget")) c.retry_budget = get_or_throw<int>(j, "retry_budget");
  if (j.contains("rate_limit_rpm")) c.rate_limit_rpm = get_or_throw<double>(j, "rate_limit_rpm");
  if (j.contains("retry_failed")) c.retry_failed = get_or_throw<bool>(j, "retry_failed");
  if (j.contains("formats")) {
    c.formats.clear();
    for (const auto& f : get_or_throw<std::vector<std::string>>(j, "formats")) {
      try {
        c.formats.push_back(report_format_from_string(f));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (j.contains("endpoints")) {
    for (const auto& [name, e] : j["endpoints"].items()) {
      for (const auto& [key, _] : e.items()) {
        if (looks_like_secret(key)) {
          throw ConfigError("endpoint '" + name + "' carries '" + key +
                            "'; credentials come from MMEVAL_API_KEY / MMEVAL_JUDGE_API_KEY only");
        }
      }
      EndpointSpec spec;
      spec.endpoint.url = get_or_throw<std::string>(e, "url");
      spec.endpoint.model = e.value("model", name);
      if (e.contains("timeout_ms")) spec.endpoint.timeout = std::chrono::milliseconds(get_or_throw<long long>(e, "timeout_ms"));
      spec.supports_interleave = e.value("supports_interleave", true);
      if (e.contains("max_images")) spec.max_images = get_or_throw<std::size_t>(e, "max_images");
      c.endpoints[name] = std::move(spec);
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  RunConfig c = parse_run_config(j);
  // Relative paths in a config file are relative to the file.
  const auto base = path.parent_path();
  auto rebase = [&](std::filesystem::path& p) {
    if (p.is_relative()) p = base / p;
  };
  for (auto& b : c.benchmarks) {
    rebase(b.tsv);
    if (b.manifest) rebase(*b.manifest);
  }
  if (j.contains("work_dir")) rebase(c.work_dir);
  return c;
}

void check_run_config(const RunConfig& c) {
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.retry_budget < 1) throw ConfigError("retry budget must be >= 1");
  if (c.rate_limit_rpm < 0) throw ConfigError("rate limit must be >= 0");
  if (c.models.empty()) throw ConfigError("no models given");
  if (c.benchmarks.empty()) throw ConfigError("no benchmarks given");
  if (c.formats.empty()) throw ConfigError("no output formats given");
  std::set<std::string> names;
  for (const auto& m : c.models) {
    if (m.starts_with("http:")) {
      if (!c.endpoints.contains(m.substr(5))) throw ConfigError("model '" + m + "': no such endpoint");
    } else if (!is_mock_spec(m)) {
      throw ConfigError("unknown model spec '" + m + "'");
    }
    if (!names.insert(model_dir_name(m)).second) throw ConfigError("model '" + m + "' listed twice");
  }
  for (const auto& b : c.benchmarks) {
    if (!std::filesystem::is_regular_file(b.tsv)) throw ConfigError("benchmark file not found: " + b.tsv.string());
    if (b.manifest && !std::filesystem::is_regular_file(*b.manifest)) {
      throw ConfigError("manifest not found: " + b.manifest->string());
    }
  }
  const auto& judge = c.judge;
  if (judge.starts_with("http:")) {
    if (!c.endpoints.contains(judge.substr(5))) throw ConfigError("judge '" + judge + "': no such endpoint");
  } else if (judge.starts_with("stub:")) {
    try {
      make_stub_judge(judge.substr(5));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (judge != "none") {
    throw ConfigError("judge must be none, stub:<name> or http:<endpoint>");
  }
}

std::string model_dir_name(std::string_view spec) {
  if (spec.starts_with("http:")) return std::string(spec.substr(5));
  return mock_name(spec);
}

std::unique_ptr<ModelAdapter> make_adapter(const RunConfig& config, const std::string& spec,
                                           std::span<const BenchmarkRecord> records) {
  if (spec.starts_with("http:")) {
    const auto name = spec.substr(5);
    const auto it = config.endpoints.find(name);
    if (it == config.endpoints.end()) throw ConfigError("no endpoint '" + name + "'");
    return std::make_unique<HttpChatAdapter>(
        it->second.endpoint, AdapterCapabilities{name, it->second.supports_interleave, it->second.max_images});
  }
  return make_mock_adapter(spec, records);
}

std::unique_ptr<JudgeClient> make_judge(const RunConfig& config) {
  if (config.judge == "none") return nullptr;
  if (config.judge.starts_with("stub:")) return make_stub_judge(config.judge.substr(5));
  if (config.judge.starts_with("http:")) {
    const auto it = config.endpoints.find(config.judge.substr(5));
    if (it == config.endpoints.end()) throw ConfigError("no judge endpoint '" + config.judge + "'");
    HttpEndpoint endpoint = it->second.endpoint;
    endpoint.api_key_env = "MMEVAL_JUDGE_API_KEY";
    return std::make_unique<HttpJudge>(endpoint);
  }
  throw ConfigError("bad judge spec '" + config.judge + "'");
}

GenerateRequest build_request(const ModelAdapter& adapter, const Benchmark& benchmark,
                              const BenchmarkRecord& record, const TaskId& task) {
  const auto type = classify_question_type(benchmark.meta, record);
  const auto variant = record_for_variant(record, task.variant_id);
  auto message = adapter.build_prompt(variant, type, benchmark.meta.name);
  GenerateRequest req{message ? std::move(*message) : build_default_prompt(variant, type),
                      benchmark.meta.name, task.sample_index, task.variant_id, {}};
  return req;
}

int cmd_run(const RunConfig& config, std::ostream& out, const AdapterFactory& factory,
            JudgeClient* judge_override) {
  std::vector<LoadedBenchmark> benches;
  std::unique_ptr<JudgeClient> owned_judge;
  try {
    check_run_config(config);
    std::set<std::string> bench_names;
    for (const auto& spec : config.benchmarks) {
      benches.push_back(load_checked(spec, config.mode));
      if (!bench_names.insert(benches.back().bench.meta.name).second) {
        throw ConfigError("benchmark name '" + benches.back().bench.meta.name + "' used twice");
      }
    }
    if (!judge_override) owned_judge = make_judge(config);
  } catch (const DatasetError& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  JudgeClient* judge = judge_override ? judge_override : owned_judge.get();

  std::filesystem::create_directories(config.work_dir);
  write_file_atomic(config.work_dir / kRunFile, run_manifest(config, benches).dump(2) + "\n");

  RetryPolicy policy;
  policy.max_attempts = config.retry_budget;
  policy.base_delay = config.retry_base_delay;

  bool corrupt = false;
  bool incomplete = false;
  std::vector<MetricReport> reports;
  for (const auto& spec : config.models) {
    const auto model = model_dir_name(spec);
    std::unique_ptr<RateLimiter> limiter;
    if (config.rate_limit_rpm > 0) limiter = std::make_unique<RateLimiter>(config.rate_limit_rpm);
    std::vector<MetricEntry> entries;
    bool model_complete = true;
    for (const auto& lb : benches) {
      const auto name = pair_name(model, lb.bench.meta.name);
      try {
        auto adapter = factory ? factory(spec, lb.bench.records) : make_adapter(config, spec, lb.bench.records);
        const auto tasks = plan_tasks(lb.bench.records, config.mode);
        const json snapshot = {{"model_spec", spec}, {"judge", config.judge}};
        auto state = RunState::open(config.work_dir,
                                    state_options(model, lb, config.mode, snapshot, config.retry_failed), tasks);
        if (state.repaired_torn_tail()) out << name << ": repaired torn final log line\n";

        std::map<std::int64_t, const BenchmarkRecord*> by_index;
        for (const auto& r : lb.bench.records) by_index[r.index] = &r;
        EngineOptions engine;
        engine.workers = config.workers;
        engine.retry = policy;
        engine.limiter = limiter.get();
        engine.crash_after = config.crash_after;
        engine.tear_on_crash = config.tear_on_crash;
        const auto stats = run(state, *adapter, [&](const TaskId& t) {
          return build_request(*adapter, lb.bench, *by_index.at(t.sample_index), t);
        }, engine);
        if (!state.complete()) {
          throw PairIncomplete(name + ": " + std::to_string(state.pending().size()) + " tasks pending");
        }
        extract_missing(state.layout(), lb.bench, state.records(), judge, config.workers, policy);
        auto scored = score_pair(config.work_dir, model, lb, config.mode);
        write_file_atomic(state.layout().report(), scored.report);
        out << name << " [" << to_string(config.mode) << "]: " << format_1dp(scored.entry.normalized)
            << " (" << stats.dispatched << " calls, " << stats.failed << " failed)\n";
        entries.push_back(scored.entry);
      } catch (const CorruptLog& e) {
        out << name << ": corrupt state: " << e.what() << "\n";
        corrupt = true;
        model_complete = false;
      } catch (const FingerprintMismatch& e) {
        out << name << ": corrupt state: " << e.what() << "\n";
        corrupt = true;
        model_complete = false;
      } catch (const std::exception& e) {
        out << name << ": incomplete: " << e.what() << "\n";
        incomplete = true;
        model_complete = false;
      }
    }
    if (model_complete) reports.push_back(metric_report(model, std::move(entries)));
  }

  write_leaderboard(rank(std::move(reports), benches), config.work_dir, config.formats, out);
  if (corrupt) return kExitCorrupt;
  if (incomplete) return kExitIncomplete;
  return kExitOk;
}

int cmd_validate(std::span<const std::filesystem::path> paths, std::ostream& out) {
  bool ok = true;
  for (const auto& path : paths) {
    try {
      const auto report = validate_benchmark(path);
      if (report.ok()) {
        out << path.string() << ": OK (" << report.rows << " rows)\n";
        continue;
      }
      ok = false;
      for (const auto& d : report.violations) {
        out << path.string() << ":" << d.line << ": " << to_string(d.kind) << ": " << d.message << "\n";
      }
    } catch (const DatasetError& e) {
      ok = false;
      out << path.string() << ":" << e.line() << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    } catch (const std::exception& e) {
      ok = false;
      out << path.string() << ": " << e.what() << "\n";
    }
  }
  return ok ? kExitOk : kExitConfig;
}

Leaderboard leaderboard_from_work_dir(const std::filesystem::path& work_dir) {
  const auto manifest = read_run_manifest(work_dir);
  std::vector<LoadedBenchmark> benches;
  for (const auto& spec : manifest.benchmarks) benches.push_back(load_checked(spec, manifest.mode));
  std::vector<MetricReport> reports;
  for (const auto& model : manifest.model_names) {
    std::vector<MetricEntry> entries;
    for (const auto& lb : benches) entries.push_back(score_pair(work_dir, model, lb, manifest.mode).entry);
    reports.push_back(metric_report(model, std::move(entries)));
  }
  return rank(std::move(reports), benches);
}

int cmd_report(const std::filesystem::path& work_dir, std::ostream& out,
               std::optional<std::vector<ReportFormat>> formats) {
  try {
    const auto manifest = read_run_manifest(work_dir);
    std::vector<LoadedBenchmark> benches;
    for (const auto& spec : manifest.benchmarks) benches.push_back(load_checked(spec, manifest.mode));
    std::vector<MetricReport> reports;
    for (const auto& model : manifest.model_names) {
      std::vector<MetricEntry> entries;
      for (const auto& lb : benches) {
        auto scored = score_pair(work_dir, model, lb, manifest.mode);
        write_file_atomic(run_layout(work_dir, model, lb.bench.meta.name, manifest.mode).report(),
                          scored.report);
        entries.push_back(scored.entry);
      }
      reports.push_back(metric_report(model, std::move(entries)));
    }
    write_leaderboard(rank(std::move(reports), benches), work_dir, formats.value_or(manifest.formats), out);
    return kExitOk;
  } catch (const PairIncomplete& e) {
    out << "error: incomplete pair " << e.what() << "\n";
    return kExitIncomplete;
  } catch (const CorruptLog& e) {
    out << "error: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const FingerprintMismatch& e) {
    out << "error: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

Leaderboard leaderboard_from_scores_tsv(std::string_view tsv,
                                        const std::map<std::string, Normalization>& scales) {
  std::vector<std::string> lines;
  for (auto& line : text::split(tsv, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::trim(line).empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ReportError("EmptyInput: no header");
  const auto header = text::split(lines.front(), '\t');
  if (header.empty() || header[0] != "model") throw ReportError("first column must be 'model'");
  const bool has_param = header.size() > 1 && header[1] == "param";
  const std::size_t first = has_param ? 2 : 1;
  std::vector<std::string> benchmarks(header.begin() + static_cast<long>(first), header.end());
  for (const auto& [name, _] : scales) {
    if (std::find(benchmarks.begin(), benchmarks.end(), name) == benchmarks.end()) {
      throw ReportError("scale given for unknown benchmark '" + name + "'");
    }
  }

  std::vector<MetricReport> reports;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = text::split(lines[i], '\t');
    if (cells.size() != header.size()) {
      throw ReportError("line " + std::to_string(i + 1) + ": expected " + std::to_string(header.size()) +
                        " cells, got " + std::to_string(cells.size()));
    }
    std::vector<MetricEntry> entries;
    std::vector<Normalization> norms;
    for (std::size_t c = first; c < cells.size(); ++c) {
      if (text::trim(cells[c]).empty()) continue;  // missing entry; caught by ranking
      std::size_t used = 0;
      double raw = 0.0;
      try {
        raw = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size()) {
        throw ReportError("line " + std::to_string(i + 1) + ": bad score '" + cells[c] + "'");
      }
      entries.push_back({header[c], raw, 0.0});
      const auto it = scales.find(header[c]);
      norms.push_back(it == scales.end() ? Normalization{} : it->second);
    }
    std::optional<std::string> param;
    if (has_param && !text::trim(cells[1]).empty()) param = cells[1];
    reports.push_back(make_metric_report(cells[0], std::move(entries), norms, param));
  }
  return average_and_rank(std::move(reports), benchmarks);
}

int cmd_aggregate(const std::filesystem::path& scores_tsv,
                  const std::map<std::string, Normalization>& scales, ReportFormat format,
                  std::ostream& out) {
  try {
    out << emit(leaderboard_from_scores_tsv(read_file(scores_tsv), scales), format);
    return kExitOk;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace mmeval
