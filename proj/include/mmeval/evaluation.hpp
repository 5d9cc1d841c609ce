#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mmeval/dataset.hpp"
#include "mmeval/inference.hpp"
#include "mmeval/judge.hpp"

namespace mmeval {

class EvaluationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// CircularEval

/// Rotation k moves the option text at position i to position (i + k) mod N;
/// labels stay A, B, ... in place.
struct CircularVariant {
  std::int64_t base_index = 0;
  int variant_id = 0;
  ChoiceMap rotated_choices;
  char rotated_gold = 'A';
};

/// All N rotations of an N-option MCQ, variant 0 first. Throws
/// EvaluationError("NotMcq") for records without options.
std::vector<CircularVariant> circular_expand(const BenchmarkRecord& record);

/// The record as seen by task `variant_id` (identity for 0 and for non-MCQ).
BenchmarkRecord record_for_variant(const BenchmarkRecord& record, int variant_id);

/// 1 iff every variant was answered correctly. Throws EvaluationError
/// ("LengthMismatch") unless hits.size() == option_count >= 2.
int circular_score(std::span<const bool> hits, std::size_t option_count);

// ---------------------------------------------------------------------------
// Answer extraction

enum class ExtractionMethod { Exact, Llm, Failed };
std::string_view to_string(ExtractionMethod method);
ExtractionMethod extraction_method_from_string(std::string_view name);

// Which rung of the exact-match ladder fired.
enum class ExactRule { R1 = 1, R2, R3, R4, R5 };

struct ExtractionResult {
  std::optional<std::string> extracted;
  ExtractionMethod method = ExtractionMethod::Failed;
  std::optional<ExactRule> rule;
  std::optional<std::string> judge_raw;
  std::optional<std::string> error;
};

/// Deterministic ladder; the first rung with exactly one matching label wins:
///   R1 trimmed response is a bare label, optionally followed by . ) or :
///   R2 exactly one label appears as (L), L., L), L: or "answer is L"
///   R3 trimmed response equals "L. <option text>"
///   R4 response equals one option's text (case/punctuation folded)
///   R5 exactly one option's text occurs in the response at word boundaries
/// Returns nullopt when no rung decides.
std::optional<ExtractionResult> exact_match_extract(std::string_view response,
                                                    const ChoiceMap& choices);

inline constexpr std::string_view kNoneOfTheAbove = "none of the above";

std::string build_choice_judge_prompt(std::string_view question, const ChoiceMap& choices,
                                      std::string_view response);

/// Judge fallback. The judge sees the options plus "Z. none of the above";
/// its reply goes back through the exact ladder. Z, an unparseable reply
/// after one re-ask, or a judge error all yield Failed.
ExtractionResult llm_extract(std::string_view response, const ChoiceMap& choices,
                             JudgeClient* judge, std::string_view question = {},
                             const RetryPolicy& policy = {});

/// Exact ladder first, judge only when it finds nothing.
ExtractionResult extract_choice(std::string_view response, const ChoiceMap& choices,
                                JudgeClient* judge, std::string_view question = {},
                                const RetryPolicy& policy = {});

enum class YesNo { Yes, No, Unknown };
std::string_view to_string(YesNo value);

/// Case-insensitive: a leading yes/no wins; otherwise whichever single one
/// of the two words occurs; otherwise Unknown.
YesNo yn_extract(std::string_view response);

// ---------------------------------------------------------------------------
// Open-ended scoring

/// Lowercase, drop punctuation and the articles a/an/the, collapse spaces.
std::string normalize_vqa_answer(std::string_view answer);

/// With >= 3 references: min(1, matches / 3). Otherwise 1 if any reference
/// matches. Matching is equality after normalize_vqa_answer.
double vqa_heuristic_score(std::string_view response, std::span<const std::string> references);

std::string build_rubric_judge_prompt(std::string_view question, std::string_view reference,
                                      std::string_view response);

struct JudgedScore {
  double score = 0.0;  // in [0, 1]
  std::optional<std::string> judge_raw;
  std::optional<std::string> error;
};

/// Asks for an integer 0-10; score = first integer / 10. One re-ask on an
/// unparseable reply, then 0 with an error recorded.
JudgedScore judge_free_form(std::string_view response, std::string_view reference,
                            JudgeClient* judge, std::string_view question = {},
                            const RetryPolicy& policy = {});

// ---------------------------------------------------------------------------
// Per-task evaluation and benchmark scoring

/// One line of extractions.jsonl.
struct TaskEvaluation {
  TaskId task;
  ExtractionMethod method = ExtractionMethod::Failed;
  std::optional<std::string> extracted;
  std::optional<std::string> judge_raw;
  std::optional<std::string> error;
  double score = 0.0;  // in [0, 1]; hit/miss for MCQ and Y/N
};

nlohmann::json to_json(const TaskEvaluation& evaluation);
TaskEvaluation task_evaluation_from_json(const nlohmann::json& j);

/// Extracts and scores one prediction against the (already rotated) record.
TaskEvaluation evaluate_prediction(const PredictionRecord& prediction,
                                   const BenchmarkRecord& variant_record, QuestionType type,
                                   JudgeClient* judge, const RetryPolicy& policy = {});

class IncompletePredictions : public std::runtime_error {
 public:
  explicit IncompletePredictions(std::vector<TaskId> missing);
  const std::vector<TaskId>& missing() const { return missing_; }

 private:
  std::vector<TaskId> missing_;
};

struct BenchmarkScore {
  double raw = 0.0;  // 0..100
  std::map<std::string, double> per_category;
  std::size_t samples = 0;
};

/// Aggregates per-task scores: mean over samples x 100, where an MCQ sample
/// in circular mode scores circular_score over its N variants.
BenchmarkScore aggregate_scores(std::span<const TaskEvaluation> evaluations,
                                std::span<const BenchmarkRecord> records, EvalMode mode);

/// Evaluates every planned task (judge calls spread over `workers` threads)
/// in task order. Throws IncompletePredictions when a task has no prediction.
std::vector<TaskEvaluation> evaluate_predictions(std::span<const PredictionRecord> predictions,
                                                 std::span<const BenchmarkRecord> records,
                                                 const BenchmarkMeta& meta, EvalMode mode,
                                                 JudgeClient* judge, std::size_t workers = 1,
                                                 const RetryPolicy& policy = {});

BenchmarkScore score_benchmark(std::span<const PredictionRecord> predictions,
                               std::span<const BenchmarkRecord> records, const BenchmarkMeta& meta,
                               EvalMode mode, JudgeClient* judge = nullptr,
                               std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Built-in deterministic judges (`--judge stub:<name>`)
//
//   semantic  picks the option a response refers to (by position phrase,
//             affirmative/negative, or unique option text) and marks free-form
//             answers 10 when the reference occurs in the response, else 0
//   refuse    always "Z" / "0"
//   const:<reply>  always <reply>

std::unique_ptr<JudgeClient> make_stub_judge(std::string_view name);

}  // namespace mmeval
