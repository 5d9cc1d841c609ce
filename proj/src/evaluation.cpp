#include "mmeval/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "mmeval/text.hpp"

namespace mmeval {
namespace {

using nlohmann::json;

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// R2: labels that appear in one of the explicit answer patterns.
std::set<char> labels_with_answer_pattern(std::string_view response, const ChoiceMap& choices) {
  std::set<char> fired;
  const std::string lowered = text::to_lower(response);
  const std::string_view trimmed = text::trim(response);
  for (const auto& [label, _] : choices) {
    for (std::size_t i = 0; i < response.size(); ++i) {
      if (response[i] != label) continue;
      const bool left_open = i == 0 || !is_alnum(response[i - 1]);
      const char next = i + 1 < response.size() ? response[i + 1] : '\0';
      if (i > 0 && response[i - 1] == '(' && next == ')') fired.insert(label);
      if (left_open && (next == '.' || next == ')' || next == ':')) fired.insert(label);
      // "answer is L"
      if (left_open && (next == '\0' || !is_alnum(next)) && i >= 10 &&
          std::string_view(lowered).substr(i - 10, 10) == "answer is ") {
        fired.insert(label);
      }
    }
    // A lone label closing the response ("... the best match is B").
    if (trimmed.size() >= 2 && trimmed.back() == label &&
        std::isspace(static_cast<unsigned char>(trimmed[trimmed.size() - 2]))) {
      fired.insert(label);
    }
  }
  return fired;
}

std::optional<ExtractionResult> exact(char label, ExactRule rule) {
  ExtractionResult r;
  r.extracted = std::string(1, label);
  r.method = ExtractionMethod::Exact;
  r.rule = rule;
  return r;
}

std::optional<int> first_integer(std::string_view reply) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j - i > 6) return std::nullopt;
    return std::stoi(std::string(reply.substr(i, j - i)));
  }
  return std::nullopt;
}

constexpr std::string_view kReask =
    "\nYour previous reply could not be parsed. Reply with exactly one option letter.";
constexpr std::string_view kRubricReask =
    "\nYour previous reply could not be parsed. Reply with a single integer from 0 to 10.";

std::string between(std::string_view s, std::string_view open, std::string_view close) {
  const auto a = s.find(open);
  if (a == std::string_view::npos) return {};
  const auto start = a + open.size();
  const auto b = s.rfind(close);
  if (b == std::string_view::npos || b < start) return std::string(s.substr(start));
  return std::string(s.substr(start, b - start));
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<CircularVariant> circular_expand(const BenchmarkRecord& record) {
  if (!record.is_mcq()) throw EvaluationError("NotMcq: sample " + std::to_string(record.index));
  std::vector<std::string> texts;
  std::vector<char> labels;
  for (const auto& [label, t] : record.choices) {
    labels.push_back(label);
    texts.push_back(t);
  }
  const std::size_t n = texts.size();
  const auto gold_pos = static_cast<std::size_t>(
      std::find(labels.begin(), labels.end(), record.answer().at(0)) - labels.begin());
  std::vector<CircularVariant> out;
  for (std::size_t k = 0; k < n; ++k) {
    CircularVariant v;
    v.base_index = record.index;
    v.variant_id = static_cast<int>(k);
    for (std::size_t i = 0; i < n; ++i) v.rotated_choices[labels[(i + k) % n]] = texts[i];
    v.rotated_gold = labels[(gold_pos + k) % n];
    out.push_back(std::move(v));
  }
  return out;
}

BenchmarkRecord record_for_variant(const BenchmarkRecord& record, int variant_id) {
  if (variant_id == 0 || !record.is_mcq()) return record;
  const auto variants = circular_expand(record);
  if (variant_id < 0 || static_cast<std::size_t>(variant_id) >= variants.size()) {
    throw EvaluationError("variant " + std::to_string(variant_id) + " out of range for sample " +
                          std::to_string(record.index));
  }
  BenchmarkRecord out = record;
  out.choices = variants[variant_id].rotated_choices;
  out.answers = {std::string(1, variants[variant_id].rotated_gold)};
  return out;
}

int circular_score(std::span<const bool> hits, std::size_t option_count) {
  if (option_count < 2 || hits.size() != option_count) {
    throw EvaluationError("LengthMismatch: " + std::to_string(hits.size()) + " results for " +
                          std::to_string(option_count) + " options");
  }
  return std::all_of(hits.begin(), hits.end(), [](bool h) { return h; }) ? 1 : 0;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ExtractionMethod method) {
  switch (method) {
    case ExtractionMethod::Exact: return "EXACT";
    case ExtractionMethod::Llm: return "LLM";
    case ExtractionMethod::Failed: return "FAILED";
  }
  return "?";
}

ExtractionMethod extraction_method_from_string(std::string_view name) {
  if (name == "EXACT") return ExtractionMethod::Exact;
  if (name == "LLM") return ExtractionMethod::Llm;
  if (name == "FAILED") return ExtractionMethod::Failed;
  throw std::invalid_argument("unknown extraction method '" + std::string(name) + "'");
}

std::optional<ExtractionResult> exact_match_extract(std::string_view response,
                                                    const ChoiceMap& choices) {
  const std::string_view trimmed = text::trim(response);

  // R1
  std::string_view bare = trimmed;
  if (bare.size() == 2 && (bare[1] == '.' || bare[1] == ')' || bare[1] == ':')) {
    bare.remove_suffix(1);
  }
  if (bare.size() == 1 && choices.contains(bare[0])) return exact(bare[0], ExactRule::R1);

  // R2
  if (const auto fired = labels_with_answer_pattern(response, choices); fired.size() == 1) {
    return exact(*fired.begin(), ExactRule::R2);
  }

  // R3
  if (trimmed.size() >= 3 && trimmed[1] == '.' && choices.contains(trimmed[0])) {
    const auto& option = choices.at(trimmed[0]);
    if (text::trim(trimmed.substr(2)) == text::trim(option) ||
        text::fold(trimmed.substr(2)) == text::fold(option)) {
      return exact(trimmed[0], ExactRule::R3);
    }
  }

  // R4
  const std::string folded = text::fold(response);
  std::vector<char> hits;
  for (const auto& [label, option] : choices) {
    const std::string f = text::fold(option);
    if (!f.empty() && f == folded) hits.push_back(label);
  }
  if (hits.size() == 1) return exact(hits.front(), ExactRule::R4);

  // R5
  hits.clear();
  for (const auto& [label, option] : choices) {
    const std::string f = text::fold(option);
    if (!f.empty() && text::contains_at_word_boundary(folded, f)) hits.push_back(label);
  }
  if (hits.size() == 1) return exact(hits.front(), ExactRule::R5);

  return std::nullopt;
}

std::string build_choice_judge_prompt(std::string_view question, const ChoiceMap& choices,
                                      std::string_view response) {
  std::string p =
      "You are checking which option a model's answer to a multiple-choice question refers to.\n";
  p += "Question: ";
  p += question;
  p += "\nOptions:\n";
  for (const auto& [label, option] : choices) {
    p += label;
    p += ". ";
    p += option;
    p += "\n";
  }
  p += "Z. ";
  p += kNoneOfTheAbove;
  p += "\nModel response: <<<\n";
  p += response;
  p += "\n>>>\n";
  p += "Reply with the letter of the closest option to the model response in meaning, "
       "or Z if none of the options matches. Reply with the letter only.";
  return p;
}

ExtractionResult llm_extract(std::string_view response, const ChoiceMap& choices,
                             JudgeClient* judge, std::string_view question,
                             const RetryPolicy& policy) {
  ChoiceMap with_sentinel = choices;
  with_sentinel.emplace('Z', std::string(kNoneOfTheAbove));
  const std::string prompt = build_choice_judge_prompt(question, choices, response);

  ExtractionResult result;
  result.method = ExtractionMethod::Failed;
  for (int ask = 0; ask < 2; ++ask) {
    std::string reply;
    try {
      reply = judge_complete(judge, ask == 0 ? prompt : prompt + std::string(kReask), policy);
    } catch (const GatewayError& e) {
      result.error = e.tag();
      if (e.kind() == FailureKind::Malformed) continue;  // an empty reply earns the re-ask
      return result;
    }
    result.error.reset();
    result.judge_raw = reply;
    const auto parsed = exact_match_extract(reply, with_sentinel);
    if (!parsed) continue;
    if (*parsed->extracted == "Z") {
      result.error = "judge found no matching option";
      return result;
    }
    result.extracted = parsed->extracted;
    result.method = ExtractionMethod::Llm;
    return result;
  }
  if (!result.error) result.error = "unparseable judge reply";
  return result;
}

ExtractionResult extract_choice(std::string_view response, const ChoiceMap& choices,
                                JudgeClient* judge, std::string_view question,
                                const RetryPolicy& policy) {
  if (auto hit = exact_match_extract(response, choices)) return *hit;
  return llm_extract(response, choices, judge, question, policy);
}

std::string_view to_string(YesNo value) {
  switch (value) {
    case YesNo::Yes: return "Yes";
    case YesNo::No: return "No";
    case YesNo::Unknown: return "Unknown";
  }
  return "?";
}

YesNo yn_extract(std::string_view response) {
  const auto ws = text::words(response);
  if (!ws.empty() && ws.front() == "yes") return YesNo::Yes;
  if (!ws.empty() && ws.front() == "no") return YesNo::No;
  const bool has_yes = std::find(ws.begin(), ws.end(), "yes") != ws.end();
  const bool has_no = std::find(ws.begin(), ws.end(), "no") != ws.end();
  if (has_yes != has_no) return has_yes ? YesNo::Yes : YesNo::No;
  return YesNo::Unknown;
}

// ---------------------------------------------------------------------------

std::string normalize_vqa_answer(std::string_view answer) {
  std::string stripped;
  for (char c : answer) {
    const auto uc = static_cast<unsigned char>(c);
    if (uc < 128 && std::ispunct(uc)) continue;
    stripped += static_cast<char>(std::tolower(uc));
  }
  std::vector<std::string> kept;
  std::istringstream tokens(stripped);
  for (std::string t; tokens >> t;) {
    if (t != "a" && t != "an" && t != "the") kept.push_back(t);
  }
  return text::join(kept, " ");
}

double vqa_heuristic_score(std::string_view response, std::span<const std::string> references) {
  if (references.empty()) throw EvaluationError("vqa_heuristic_score needs a reference");
  const std::string norm = normalize_vqa_answer(response);
  std::size_t matches = 0;
  for (const auto& ref : references) {
    if (normalize_vqa_answer(ref) == norm) ++matches;
  }
  if (references.size() >= 3) return std::min(1.0, static_cast<double>(matches) / 3.0);
  return matches > 0 ? 1.0 : 0.0;
}

std::string build_rubric_judge_prompt(std::string_view question, std::string_view reference,
                                      std::string_view response) {
  std::string p = "You are grading a free-form answer against a reference answer.\n";
  p += "Question: ";
  p += question;
  p += "\nReference answer: <<<\n";
  p += reference;
  p += "\n>>>\nModel response: <<<\n";
  p += response;
  p += "\n>>>\n";
  p += "Rate how well the model response matches the reference answer in meaning on an integer "
       "scale from 0 (unrelated or wrong) to 10 (equivalent). Reply with the integer only.";
  return p;
}

JudgedScore judge_free_form(std::string_view response, std::string_view reference,
                            JudgeClient* judge, std::string_view question,
                            const RetryPolicy& policy) {
  const std::string prompt = build_rubric_judge_prompt(question, reference, response);
  JudgedScore result;
  for (int ask = 0; ask < 2; ++ask) {
    try {
      result.judge_raw =
          judge_complete(judge, ask == 0 ? prompt : prompt + std::string(kRubricReask), policy);
    } catch (const GatewayError& e) {
      result.error = e.tag();
      result.score = 0.0;
      if (e.kind() == FailureKind::Malformed) continue;
      return result;
    }
    result.error.reset();
    const auto value = first_integer(*result.judge_raw);
    if (value && *value >= 0 && *value <= 10) {
      result.score = *value / 10.0;
      return result;
    }
  }
  if (!result.error) result.error = "unparseable judge reply";
  result.score = 0.0;
  return result;
}

// ---------------------------------------------------------------------------

json to_json(const TaskEvaluation& e) {
  json j = {{"sample_index", e.task.sample_index},
            {"variant_id", e.task.variant_id},
            {"method", to_string(e.method)}};
  if (e.extracted) j["extracted"] = *e.extracted;
  if (e.judge_raw) j["judge_raw"] = *e.judge_raw;
  if (e.error) j["error"] = *e.error;
  j["score"] = e.score;
  return j;
}

TaskEvaluation task_evaluation_from_json(const json& j) {
  TaskEvaluation e;
  e.task = {j.at("sample_index").get<std::int64_t>(), j.at("variant_id").get<int>()};
  e.method = extraction_method_from_string(j.at("method").get<std::string>());
  if (j.contains("extracted")) e.extracted = j["extracted"].get<std::string>();
  if (j.contains("judge_raw")) e.judge_raw = j["judge_raw"].get<std::string>();
  if (j.contains("error")) e.error = j["error"].get<std::string>();
  e.score = j.at("score").get<double>();
  if (e.score < 0.0 || e.score > 1.0) throw std::invalid_argument("score outside [0, 1]");
  if (e.method == ExtractionMethod::Failed && e.score != 0.0) {
    throw std::invalid_argument("FAILED extraction with non-zero score");
  }
  return e;
}

TaskEvaluation evaluate_prediction(const PredictionRecord& prediction,
                                   const BenchmarkRecord& record, QuestionType type,
                                   JudgeClient* judge, const RetryPolicy& policy) {
  TaskEvaluation out;
  out.task = prediction.task();
  if (!prediction.response) {
    out.method = ExtractionMethod::Failed;
    out.error = prediction.error;
    return out;
  }
  const std::string& response = *prediction.response;

  auto apply = [&](const ExtractionResult& r) {
    out.method = r.method;
    out.extracted = r.extracted;
    out.judge_raw = r.judge_raw;
    out.error = r.error;
  };

  switch (type) {
    case QuestionType::Mcq: {
      apply(extract_choice(response, record.choices, judge, record.question, policy));
      out.score = out.extracted && *out.extracted == record.answer() ? 1.0 : 0.0;
      break;
    }
    case QuestionType::YesNo: {
      const YesNo yn = yn_extract(response);
      if (yn != YesNo::Unknown) {
        out.method = ExtractionMethod::Exact;
        out.extracted = std::string(to_string(yn));
      } else {
        const ChoiceMap yes_no{{'A', "Yes"}, {'B', "No"}};
        ExtractionResult r = llm_extract(response, yes_no, judge, record.question, policy);
        if (r.extracted) r.extracted = yes_no.at((*r.extracted)[0]);
        apply(r);
      }
      out.score = out.extracted && text::iequals(*out.extracted, record.answer()) ? 1.0 : 0.0;
      break;
    }
    case QuestionType::OpenVqa: {
      out.method = ExtractionMethod::Exact;
      out.extracted = response;
      out.score = vqa_heuristic_score(response, record.answers);
      break;
    }
    case QuestionType::OpenJudged: {
      const JudgedScore judged =
          judge_free_form(response, record.answer(), judge, record.question, policy);
      out.method = judged.error ? ExtractionMethod::Failed : ExtractionMethod::Llm;
      out.extracted = response;
      out.judge_raw = judged.judge_raw;
      out.error = judged.error;
      out.score = judged.score;
      break;
    }
  }
  if (out.method == ExtractionMethod::Failed) {
    out.score = 0.0;
    if (type != QuestionType::OpenJudged) out.extracted.reset();
  }
  return out;
}

namespace {
std::string describe_missing(const std::vector<TaskId>& missing) {
  std::string s = "IncompletePredictions: " + std::to_string(missing.size()) + " task(s) missing:";
  for (std::size_t i = 0; i < missing.size() && i < 20; ++i) s += " " + to_string(missing[i]);
  if (missing.size() > 20) s += " ...";
  return s;
}
}  // namespace

IncompletePredictions::IncompletePredictions(std::vector<TaskId> missing)
    : std::runtime_error(describe_missing(missing)), missing_(std::move(missing)) {}

BenchmarkScore aggregate_scores(std::span<const TaskEvaluation> evaluations,
                                std::span<const BenchmarkRecord> records, EvalMode mode) {
  std::map<TaskId, double> by_task;
  for (const auto& e : evaluations) by_task[e.task] = e.score;

  std::vector<TaskId> missing;
  auto lookup = [&](TaskId id) {
    const auto it = by_task.find(id);
    if (it == by_task.end()) {
      missing.push_back(id);
      return 0.0;
    }
    return it->second;
  };

  BenchmarkScore out;
  std::map<std::string, std::pair<double, std::size_t>> categories;
  double total = 0.0;
  for (const auto& r : records) {
    double sample = 0.0;
    if (mode == EvalMode::Circular && r.is_mcq()) {
      const std::size_t n = r.choices.size();
      auto hits = std::make_unique<bool[]>(n);
      for (std::size_t v = 0; v < n; ++v) {
        hits[v] = lookup({r.index, static_cast<int>(v)}) >= 1.0;
      }
      sample = circular_score(std::span<const bool>(hits.get(), n), n);
    } else {
      sample = lookup({r.index, 0});
    }
    total += sample;
    if (r.category) {
      auto& [sum, count] = categories[*r.category];
      sum += sample;
      ++count;
    }
  }
  if (!missing.empty()) throw IncompletePredictions(std::move(missing));
  out.samples = records.size();
  out.raw = records.empty() ? 0.0 : 100.0 * total / static_cast<double>(records.size());
  for (const auto& [name, acc] : categories) {
    out.per_category[name] = 100.0 * acc.first / static_cast<double>(acc.second);
  }
  return out;
}

std::vector<TaskEvaluation> evaluate_predictions(std::span<const PredictionRecord> predictions,
                                                 std::span<const BenchmarkRecord> records,
                                                 const BenchmarkMeta& meta, EvalMode mode,
                                                 JudgeClient* judge, std::size_t workers,
                                                 const RetryPolicy& policy) {
  std::map<TaskId, const PredictionRecord*> by_task;
  for (const auto& p : predictions) by_task[p.task()] = &p;
  std::map<std::int64_t, const BenchmarkRecord*> by_index;
  for (const auto& r : records) by_index[r.index] = &r;

  const auto tasks = plan_tasks(records, mode);
  std::vector<TaskId> missing;
  for (const auto& t : tasks) {
    if (!by_task.contains(t)) missing.push_back(t);
  }
  if (!missing.empty()) throw IncompletePredictions(std::move(missing));

  std::vector<TaskEvaluation> out(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const BenchmarkRecord& base = *by_index.at(tasks[i].sample_index);
        const QuestionType type = classify_question_type(meta, base);
        out[i] = evaluate_prediction(*by_task.at(tasks[i]),
                                     record_for_variant(base, tasks[i].variant_id), type, judge,
                                     policy);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, tasks.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < n; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

BenchmarkScore score_benchmark(std::span<const PredictionRecord> predictions,
                               std::span<const BenchmarkRecord> records, const BenchmarkMeta& meta,
                               EvalMode mode, JudgeClient* judge, std::size_t workers) {
  const auto evaluations = evaluate_predictions(predictions, records, meta, mode, judge, workers);
  return aggregate_scores(evaluations, records, mode);
}

// ---------------------------------------------------------------------------

namespace {

class SemanticStubJudge : public JudgeClient {
 protected:
  std::string reply(const std::string& prompt) override {
    if (prompt.find("\nReference answer: <<<\n") != std::string::npos) {
      const auto reference = text::fold(between(prompt, "\nReference answer: <<<\n", "\n>>>\nModel"));
      const auto response = text::fold(between(prompt, "\nModel response: <<<\n", "\n>>>\n"));
      return !reference.empty() && text::contains_at_word_boundary(response, reference) ? "10" : "0";
    }
    const std::string options_block = between(prompt, "\nOptions:\n", "\nModel response: <<<\n");
    ChoiceMap options;
    for (const auto& line : text::split(options_block, '\n')) {
      if (line.size() >= 3 && line[1] == '.' && line[2] == ' ' && line[0] >= 'A' &&
          line[0] <= 'Y') {
        options[line[0]] = line.substr(3);
      }
    }
    const std::string response = between(prompt, "\nModel response: <<<\n", "\n>>>\n");
    std::vector<char> labels;
    for (const auto& [label, _] : options) labels.push_back(label);

    static const std::regex kPosition(R"(option number (\d+))", std::regex::icase);
    std::smatch m;
    if (std::regex_search(response, m, kPosition)) {
      const auto k = std::stoul(m[1].str());
      if (k >= 1 && k <= labels.size()) return std::string(1, labels[k - 1]);
    }
    const auto ws = text::words(response);
    for (const auto& [word, meaning] : {std::pair{"affirmative", "yes"}, std::pair{"negative", "no"}}) {
      if (std::find(ws.begin(), ws.end(), word) == ws.end()) continue;
      for (const auto& [label, option] : options) {
        if (text::iequals(option, meaning)) return std::string(1, label);
      }
    }
    const auto folded = text::fold(response);
    std::vector<char> hits;
    for (const auto& [label, option] : options) {
      const auto f = text::fold(option);
      if (!f.empty() && text::contains_at_word_boundary(folded, f)) hits.push_back(label);
    }
    if (hits.size() == 1) return std::string(1, hits.front());
    return "Z";
  }
};

class RefusingStubJudge : public JudgeClient {
 protected:
  std::string reply(const std::string& prompt) override {
    return prompt.find("\nReference answer: <<<\n") != std::string::npos ? "0" : "Z";
  }
};

}  // namespace

std::unique_ptr<JudgeClient> make_stub_judge(std::string_view name) {
  if (name == "semantic") return std::make_unique<SemanticStubJudge>();
  if (name == "refuse") return std::make_unique<RefusingStubJudge>();
  if (name.starts_with("const:")) {
    std::string reply(name.substr(6));
    return std::make_unique<FunctionJudge>([reply](const std::string&) { return reply; });
  }
  throw std::invalid_argument("unknown stub judge '" + std::string(name) +
                              "' (semantic, refuse, const:<reply>)");
}

}  // namespace mmeval
