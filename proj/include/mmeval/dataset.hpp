#pragma once

// Benchmarks are TSV files, one evaluation sample per line. A header names
// the columns; `index`, `question` and `answer` are mandatory, `image`,
// `category` and single-letter option columns `A`..`Z` are optional, and any
// other column is carried through untouched as an extra.
//
// Cell conventions:
//   - question / answer / option / category text escape backslash, newline,
//     tab and CR as two-character sequences (`\\`, `\n`, `\t`, `\r`).
//   - `image` is empty, a single base64 payload, or a JSON array of payloads.
//   - `answer` holding a JSON array of strings carries multiple references.
//
// A sidecar manifest `<stem>.manifest` next to `<stem>.tsv` declares the
// benchmark name, question type and raw score range.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmeval {

enum class QuestionType { Mcq, YesNo, OpenVqa, OpenJudged };

std::string_view to_string(QuestionType type);
QuestionType question_type_from_string(std::string_view name);

// Affine map of [raw_min, raw_max] onto [0, 100].
struct Normalization {
  double raw_min = 0.0;
  double raw_max = 100.0;

  bool operator==(const Normalization&) const = default;
};

struct BenchmarkMeta {
  std::string name;
  QuestionType question_type = QuestionType::Mcq;
  Normalization normalization;
  std::size_t record_count = 0;
};

using ChoiceMap = std::map<char, std::string>;

struct BenchmarkRecord {
  std::int64_t index = 0;
  std::string question;
  // One entry for MCQ labels, Yes/No and single references; several for
  // multi-reference open questions.
  std::vector<std::string> answers{""};
  std::vector<std::string> images;  // base64 payloads
  ChoiceMap choices;
  std::optional<std::string> category;
  std::vector<std::pair<std::string, std::string>> extras;

  const std::string& answer() const { return answers.front(); }
  bool is_mcq() const { return !choices.empty(); }

  bool operator==(const BenchmarkRecord&) const = default;
};

struct Benchmark {
  BenchmarkMeta meta;
  std::vector<BenchmarkRecord> records;
};

enum class DatasetErrorKind {
  MissingColumn,
  DuplicateIndex,
  BadBase64,
  AnswerNotInChoices,
  EmbeddedTabOrNewline,
  MalformedRow,
  InconsistentMeta,
  BadManifest,
  Io,
};

std::string_view to_string(DatasetErrorKind kind);

struct Diagnostic {
  DatasetErrorKind kind;
  std::size_t line;  // 1-based; the header is line 1
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(Diagnostic diagnostic);

  DatasetErrorKind kind() const { return diagnostic_.kind; }
  std::size_t line() const { return diagnostic_.line; }
  const Diagnostic& diagnostic() const { return diagnostic_; }

 private:
  Diagnostic diagnostic_;
};

struct ValidationReport {
  std::vector<Diagnostic> violations;
  std::size_t rows = 0;

  bool ok() const { return violations.empty(); }
};

/// Parses TSV text into records. All-or-nothing: the first violation (in
/// line order) is thrown as a DatasetError.
std::vector<BenchmarkRecord> parse_benchmark_tsv(std::string_view tsv);

/// Lists every violation in the text. Content problems never throw.
ValidationReport validate_benchmark_tsv(std::string_view tsv,
                                        const BenchmarkMeta* meta = nullptr);

std::vector<BenchmarkRecord> load_benchmark(const std::filesystem::path& tsv);

/// Uses the sidecar manifest when present and checks every record against
/// the declared question type.
ValidationReport validate_benchmark(const std::filesystem::path& tsv);

/// Loads records plus manifest (or defaults when no manifest exists).
Benchmark open_benchmark(const std::filesystem::path& tsv,
                         std::optional<std::filesystem::path> manifest = std::nullopt);

/// Canonical serialization: index, question, answer, then image / A.. /
/// category columns when any record uses them, then extras in first-seen
/// order. Throws std::invalid_argument when an extra holds a tab or newline.
std::string serialize_benchmark_tsv(std::span<const BenchmarkRecord> records);

std::filesystem::path manifest_path_for(const std::filesystem::path& tsv);
BenchmarkMeta parse_manifest(std::string_view text);
BenchmarkMeta load_manifest(const std::filesystem::path& path);
std::string serialize_manifest(const BenchmarkMeta& meta);

/// MCQ iff the record has choices; YN iff the manifest says YN and the gold
/// is Yes/No; otherwise the manifest's open type. Throws DatasetError
/// (InconsistentMeta) when the record contradicts the manifest.
QuestionType classify_question_type(const BenchmarkMeta& meta, const BenchmarkRecord& record);

std::string read_file(const std::filesystem::path& path);

}  // namespace mmeval
