#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmeval/dataset.hpp"

namespace mmeval {

class ReportError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Affine map of the declared raw range onto [0, 100]. Throws ReportError
/// ("OutOfRange") for raw values outside the range.
double normalize(double raw, const Normalization& normalization);

/// Unweighted mean of split scores. Throws ReportError("EmptyInput").
double merge_splits(std::span<const double> scores);

/// Half-up to one decimal, for display only.
double round_half_up_1(double value);
std::string format_1dp(double value);

struct MetricEntry {
  std::string benchmark;
  double raw = 0.0;
  double normalized = 0.0;
};

struct MetricReport {
  std::string model;
  std::vector<MetricEntry> entries;
  double average = 0.0;  // full precision
  std::optional<std::string> param_count;
};

/// Normalizes each (benchmark, raw) pair and computes the average.
MetricReport make_metric_report(std::string model, std::vector<MetricEntry> entries,
                                std::span<const Normalization> normalizations,
                                std::optional<std::string> param_count = std::nullopt);

struct Leaderboard {
  std::vector<std::string> benchmarks;  // column order
  std::vector<MetricReport> rows;       // average descending, then model name
};

/// Sorts by full-precision average (ties by model name). Every report must
/// cover the same benchmarks; otherwise ReportError("BenchmarkSetMismatch").
/// Column order is `column_order` when given, else sorted benchmark names.
Leaderboard average_and_rank(std::vector<MetricReport> reports,
                             std::optional<std::vector<std::string>> column_order = std::nullopt);

enum class ReportFormat { Tsv, Markdown, Json };

ReportFormat report_format_from_string(std::string_view name);
std::string_view file_extension(ReportFormat format);

/// Deterministic rendering. Markdown and TSV show one decimal; JSON keeps
/// full precision (schema_version 1).
std::string emit(const Leaderboard& board, ReportFormat format);

/// Writes <dir>/leaderboard.<ext> atomically and returns its path.
std::filesystem::path emit_to_file(const Leaderboard& board, ReportFormat format,
                                   const std::filesystem::path& dir);

}  // namespace mmeval
