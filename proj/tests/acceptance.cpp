// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "extraction_corpus.hpp"
#include "mmeval/mocks.hpp"
#include "mmeval/pipeline.hpp"
#include "mmeval/text.hpp"
#include "support.hpp"

using namespace mmeval;
using mmeval::fixtures::data_path;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      details.push_back(what);
    }
  }
  void note(const std::string& what) { details.push_back(what); }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Benchmark synthetic_mcq(const std::string& name, int n, int options) {
  Benchmark b;
  b.meta.name = name;
  b.meta.question_type = QuestionType::Mcq;
  for (int i = 0; i < n; ++i) {
    BenchmarkRecord r;
    r.index = i;
    r.question = "Synthetic question " + std::to_string(i);
    for (int o = 0; o < options; ++o) r.choices['A' + o] = "item" + std::to_string(i) + "_" + std::to_string(o);
    r.answers = {std::string(1, static_cast<char>('A' + i % options))};
    b.records.push_back(std::move(r));
  }
  b.meta.record_count = b.records.size();
  return b;
}

void write_benchmark(const Benchmark& b, const std::filesystem::path& tsv) {
  fixtures::write_text(tsv, serialize_benchmark_tsv(b.records));
  fixtures::write_text(manifest_path_for(tsv), serialize_manifest(b.meta));
}

// Dispatches every planned task through `adapter` and scores the results
// without touching disk.
double score_in_memory(ModelAdapter& adapter, const Benchmark& bench, EvalMode mode, JudgeClient* judge) {
  std::map<std::int64_t, const BenchmarkRecord*> by_index;
  for (const auto& r : bench.records) by_index[r.index] = &r;
  std::vector<PredictionRecord> preds;
  for (const auto& t : plan_tasks(bench.records, mode)) {
    PredictionRecord p;
    p.sample_index = t.sample_index;
    p.variant_id = t.variant_id;
    p.model = adapter.capabilities().name;
    p.benchmark = bench.meta.name;
    try {
      p.response = generate(adapter, build_request(adapter, bench, *by_index.at(t.sample_index), t)).text;
    } catch (const GatewayError& e) {
      p.error = e.tag();
    }
    preds.push_back(std::move(p));
  }
  const auto score = score_benchmark(preds, bench.records, bench.meta, mode, judge);
  return normalize(score.raw, bench.meta.normalization);
}

// Oracle that answers a deterministic, seed-dependent half of the questions
// with a random option instead.
class NoisyOracle : public ModelAdapter {
 public:
  NoisyOracle(std::span<const BenchmarkRecord> records, std::uint64_t seed)
      : oracle_(records), seed_(seed), caps_{"noisy-oracle-" + std::to_string(seed), true, std::nullopt} {}
  const AdapterCapabilities& capabilities() const override { return caps_; }
  std::string call(const GenerateRequest& request) override {
    const auto prompt = message_text(request.message);
    std::mt19937_64 rng(seed_ ^ std::hash<std::string>{}(prompt));
    if (rng() % 2 == 0) return oracle_.call(request);
    const auto options = parse_option_lines(prompt);
    auto it = options.begin();
    std::advance(it, static_cast<long>(rng() % options.size()));
    return std::string(1, it->first);
  }

 private:
  OracleAdapter oracle_;
  std::uint64_t seed_;
  AdapterCapabilities caps_;
};

// ---------------------------------------------------------------------------

Outcome leaderboard_goldens() {
  Outcome o;
  const auto start = Clock::now();
  for (const auto* table : {"table1", "table2"}) {
    std::map<std::string, Normalization> scales;
    if (std::string(table) == "table1") scales["OCR"] = {0.0, 1000.0};  // the 0-1000 column
    const auto board =
        leaderboard_from_scores_tsv(read_file(data_path(std::string(table) + "_scores.tsv")), scales);
    const auto expected_lines = text::split(text::trim(read_file(data_path(std::string(table) + "_expected.tsv"))), '\n');
    std::vector<std::string> printed_order;
    std::map<std::string, double> printed_avg;
    for (std::size_t i = 1; i < expected_lines.size(); ++i) {
      const auto cells = text::split(text::trim(expected_lines[i]), '\t');
      printed_order.push_back(cells.at(0));
      printed_avg[cells.at(0)] = std::stod(cells.at(1));
    }
    std::vector<std::string> computed_order;
    for (const auto& row : board.rows) {
      computed_order.push_back(row.model);
      const auto it = printed_avg.find(row.model);
      if (it == printed_avg.end()) {
        o.check(false, std::string(table) + ": unexpected model " + row.model);
        continue;
      }
      const double diff = std::abs(row.average - it->second);
      o.check(diff <= 0.05 + 1e-9, std::string(table) + ": " + row.model + " average " + fmt(row.average) +
                                       " vs printed " + fmt(it->second, 1) + " (|diff| " + fmt(diff) + ")");
    }
    o.check(computed_order.size() == printed_order.size(), std::string(table) + ": row count differs");
    if (computed_order != printed_order) {
      o.check(false, std::string(table) + ": computed order " + text::join(computed_order, ", ") +
                         " differs from printed order " + text::join(printed_order, ", "));
    }
  }
  const double elapsed = seconds_since(start);
  o.check(elapsed < 1.0, "runtime " + fmt(elapsed, 3) + " s >= 1 s");
  return o;
}

Outcome random_guess_calibration() {
  Outcome o;
  const auto start = Clock::now();
  const int n = 10'000;
  const auto bench = synthetic_mcq("Calibration10k", n, 4);
  UniformRandomAdapter random(20240601);

  const double vanilla = score_in_memory(random, bench, EvalMode::Vanilla, nullptr);
  const double p_vanilla = 0.25;
  const double sigma_vanilla = 100.0 * std::sqrt(p_vanilla * (1 - p_vanilla) / n);
  o.check(std::abs(vanilla - 100 * p_vanilla) <= 3 * sigma_vanilla,
          "vanilla " + fmt(vanilla) + " outside 25 +- " + fmt(3 * sigma_vanilla));
  o.note("vanilla " + fmt(vanilla) + " (expected 25.0, 3 sigma " + fmt(3 * sigma_vanilla) + ")");

  const double circular = score_in_memory(random, bench, EvalMode::Circular, nullptr);
  const double p_circular = std::pow(0.25, 4);
  const double sigma_circular = 100.0 * std::sqrt(p_circular * (1 - p_circular) / n);
  o.check(std::abs(circular - 100 * p_circular) <= 3 * sigma_circular,
          "circular " + fmt(circular) + " outside " + fmt(100 * p_circular) + " +- " + fmt(3 * sigma_circular));
  o.note("circular " + fmt(circular) + " (expected " + fmt(100 * p_circular) + ", 3 sigma " +
         fmt(3 * sigma_circular) + ")");

  const double elapsed = seconds_since(start);
  o.check(elapsed < 30.0, "runtime " + fmt(elapsed, 2) + " s >= 30 s");
  return o;
}

Outcome circular_dominance() {
  Outcome o;
  const auto bench = open_benchmark(data_path("mcq_fixture.tsv"));
  auto judge = make_stub_judge("semantic");
  std::vector<std::unique_ptr<ModelAdapter>> models;
  for (std::uint64_t seed = 1; seed <= 16; ++seed) models.push_back(std::make_unique<UniformRandomAdapter>(seed));
  for (std::uint64_t seed = 1; seed <= 8; ++seed) models.push_back(std::make_unique<NoisyOracle>(bench.records, seed));
  o.check(models.size() >= 20, "fewer than 20 randomized models");
  int strictly_lower = 0;
  for (auto& m : models) {
    const double vanilla = score_in_memory(*m, bench, EvalMode::Vanilla, judge.get());
    const double circular = score_in_memory(*m, bench, EvalMode::Circular, judge.get());
    o.check(circular <= vanilla, m->capabilities().name + ": circular " + fmt(circular) + " > vanilla " + fmt(vanilla));
    if (circular < vanilla) ++strictly_lower;
  }
  o.note(std::to_string(models.size()) + " randomized models, circular strictly lower for " +
         std::to_string(strictly_lower));
  for (const auto* spec : {"oracle", "verbose-oracle"}) {
    auto oracle = make_mock_adapter(spec, bench.records);
    for (const auto mode : {EvalMode::Vanilla, EvalMode::Circular}) {
      const double score = score_in_memory(*oracle, bench, mode, judge.get());
      o.check(score == 100.0, std::string(spec) + " " + std::string(to_string(mode)) + " scored " + fmt(score));
    }
  }
  return o;
}

Outcome extraction_corpus() {
  Outcome o;
  const auto cases = fixtures::run_corpus(data_path("extraction_corpus.jsonl").string());
  std::set<std::string> rules;
  int exact = 0;
  for (const auto& c : cases) {
    o.check(c.passed, ("case " + c.spec.at("id").dump()) + ": " + c.detail);
    if (c.spec.at("method") == "EXACT") {
      ++exact;
      rules.insert(c.spec.at("rule").get<std::string>());
      o.check(c.spec.at("judge_calls") == 0, ("case " + c.spec.at("id").dump()) + ": exact case expects judge calls");
    }
  }
  o.check(cases.size() >= 60, "corpus has only " + std::to_string(cases.size()) + " cases");
  o.check(rules == std::set<std::string>{"R1", "R2", "R3", "R4", "R5"}, "corpus does not cover every rule");
  o.note(std::to_string(cases.size()) + " cases, " + std::to_string(exact) + " exact");
  return o;
}

Outcome crash_resume() {
  Outcome o;
  const auto start = Clock::now();
  fixtures::TempDir dir;
  const auto bench = synthetic_mcq("Resume200", 50, 4);  // 50 x 4 variants = 200 tasks
  const auto tsv = dir / "resume200.tsv";
  write_benchmark(bench, tsv);
  const std::size_t workers = 4;
  const int kills = 10;

  auto config_for = [&](const std::filesystem::path& work) {
    RunConfig c;
    c.models = {"uniform-random:11"};
    c.benchmarks = {{tsv, std::nullopt}};
    c.mode = EvalMode::Circular;
    c.workers = workers;
    c.judge = "stub:semantic";
    c.work_dir = work;
    c.retry_base_delay = std::chrono::milliseconds(0);
    return c;
  };
  std::size_t calls = 0;
  std::vector<std::unique_ptr<ModelAdapter>> inner;
  std::vector<std::unique_ptr<CountingAdapter>> counters;
  AdapterFactory factory = [&](const std::string& spec, std::span<const BenchmarkRecord> records) {
    inner.push_back(make_mock_adapter(spec, records));
    counters.push_back(std::make_unique<CountingAdapter>(*inner.back()));
    return std::unique_ptr<ModelAdapter>(std::make_unique<FunctionAdapter>(
        counters.back()->capabilities(),
        [c = counters.back().get()](const GenerateRequest& r) { return c->call(r); }));
  };
  auto drain = [&] {
    for (const auto& c : counters) calls += c->calls();
    counters.clear();
    inner.clear();
  };

  std::ostringstream log;
  const auto reference = dir / "reference";
  o.check(cmd_run(config_for(reference), log, factory) == kExitOk, "uninterrupted run failed: " + log.str());
  drain();
  const std::size_t reference_calls = calls;
  calls = 0;

  const auto resumed = dir / "resumed";
  std::mt19937_64 rng(4242);
  for (int k = 0; k < kills; ++k) {
    auto c = config_for(resumed);
    c.crash_after = std::uniform_int_distribution<std::size_t>(1, 15)(rng);
    c.tear_on_crash = rng() % 2 == 0;
    std::ostringstream out;
    const int code = cmd_run(c, out, factory);
    o.check(code == kExitIncomplete, "kill " + std::to_string(k) + " exit " + std::to_string(code));
    drain();
  }
  std::ostringstream final_out;
  o.check(cmd_run(config_for(resumed), final_out, factory) == kExitOk, "final resume failed: " + final_out.str());
  drain();

  const std::size_t interruptions = static_cast<std::size_t>(kills);
  const std::size_t duplicates = calls > reference_calls ? calls - reference_calls : 0;
  o.check(calls >= reference_calls, "resumed run made fewer calls than tasks");
  o.check(duplicates <= workers * interruptions,
          "duplicate calls " + std::to_string(duplicates) + " > W per kill (" + std::to_string(workers * interruptions) + ")");
  o.note("reference calls " + std::to_string(reference_calls) + ", resumed calls " + std::to_string(calls) +
         ", duplicates " + std::to_string(duplicates) + " over " + std::to_string(interruptions) + " interruptions");

  for (const auto* model : {"uniform-random-11"}) {
    auto lines = [&](const std::filesystem::path& work) {
      std::set<std::string> out;
      for (const auto& line : text::split(read_file(run_layout(work, model, "Resume200", EvalMode::Circular).predictions()), '\n')) {
        if (text::trim(line).empty()) continue;
        const auto p = prediction_from_json(nlohmann::json::parse(line));
        out.insert(to_string(p.task()) + "|" + p.model + "|" + p.benchmark + "|" + p.response.value_or("") + "|" +
                   p.error.value_or(""));
      }
      return out;
    };
    const auto a = lines(reference);
    const auto b = lines(resumed);
    o.check(a.size() == 200, std::string(model) + ": reference log has " + std::to_string(a.size()) + " records");
    o.check(a == b, std::string(model) + ": resumed log differs from uninterrupted log");
  }

  for (const auto* f : {"leaderboard.tsv", "leaderboard.md", "leaderboard.json"}) {
    o.check(read_file(reference / f) == read_file(resumed / f), std::string(f) + " differs after resume");
  }
  std::ostringstream report_out;
  const auto before = read_file(resumed / "leaderboard.json");
  o.check(cmd_report(resumed, report_out) == kExitOk, "report failed: " + report_out.str());
  o.check(read_file(resumed / "leaderboard.json") == before, "recomputed leaderboard bytes differ");

  const double elapsed = seconds_since(start);
  o.check(elapsed < 60.0, "runtime " + fmt(elapsed, 2) + " s >= 60 s");
  return o;
}

Outcome dataset_codec() {
  Outcome o;
  fixtures::Gen gen(1000);
  for (int i = 0; i < 1000 && o.pass; ++i) {
    const auto records = gen.benchmark();
    const auto tsv = serialize_benchmark_tsv(records);
    const auto loaded = parse_benchmark_tsv(tsv);
    o.check(serialize_benchmark_tsv(loaded) == tsv, "iteration " + std::to_string(i) + ": round trip not byte-identical");
    o.check(loaded == records, "iteration " + std::to_string(i) + ": reload not structurally equal");
  }

  // Fault set: each single-cell corruption must be rejected with its kind on
  // the corrupted line.
  auto expect = [&](const std::string& name, const std::string& text, DatasetErrorKind kind, std::size_t line) {
    try {
      parse_benchmark_tsv(text);
      o.check(false, name + ": accepted");
    } catch (const DatasetError& e) {
      o.check(e.kind() == kind && e.line() == line,
              name + ": got " + std::string(to_string(e.kind())) + " at line " + std::to_string(e.line()));
    }
  };
  int faults = 0;
  for (int i = 0; i < 300; ++i) {
    const auto records = gen.benchmark();
    const auto tsv = serialize_benchmark_tsv(records);
    auto lines = text::split(tsv, '\n');
    lines.pop_back();
    const auto header = text::split(lines[0], '\t');
    const auto row = static_cast<std::size_t>(gen.between(1, static_cast<int>(lines.size()) - 1));
    const auto cells = text::split(lines[row], '\t');
    auto col = [&](const std::string& name) {
      return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
    };
    auto with_cell = [&](std::size_t c, const std::string& value) {
      auto copy_cells = cells;
      copy_cells[c] = value;
      auto copy = lines;
      copy[row] = text::join(copy_cells, "\t");
      return text::join(copy, "\n") + "\n";
    };
    const auto& rec = records[row - 1];
    const std::size_t line = row + 1;
    const std::string tag = "case " + std::to_string(i);

    expect(tag + " tab in question", with_cell(col("question"), cells[col("question")] + "\tX"),
           DatasetErrorKind::EmbeddedTabOrNewline, line);
    ++faults;
    if (rec.images.size() == 1) {
      auto cell = cells[col("image")];
      cell.pop_back();
      expect(tag + " truncated base64", with_cell(col("image"), cell), DatasetErrorKind::BadBase64, line);
      ++faults;
    }
    if (rec.is_mcq()) {
      expect(tag + " answer outside choices",
             with_cell(col("answer"), std::string(1, static_cast<char>(rec.choices.rbegin()->first + 1))),
             DatasetErrorKind::AnswerNotInChoices, line);
      ++faults;
    }
    if (row > 1) {
      expect(tag + " duplicate index", with_cell(col("index"), text::split(lines[1], '\t')[0]),
             DatasetErrorKind::DuplicateIndex, line);
      ++faults;
    }
  }
  expect("empty file", "", DatasetErrorKind::MissingColumn, 1);
  expect("missing answer column", "index\tquestion\n0\tq\n", DatasetErrorKind::MissingColumn, 1);
  o.note("1000 round trips, " + std::to_string(faults + 2) + " corruptions");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"leaderboard arithmetic goldens (tables 1 and 2)", leaderboard_goldens},
      {"random-guess calibration (10,000 x 4 options)", random_guess_calibration},
      {"circular dominance and oracle 100.0", circular_dominance},
      {"extraction ladder corpus", extraction_corpus},
      {"crash/resume equivalence (200 tasks, 10 kills)", crash_resume},
      {"dataset codec round trip and fault set", dataset_codec},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << "\n";
    for (const auto& d : o.details) std::cout << "       " << d << "\n";
    if (!o.pass) ++failed;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
