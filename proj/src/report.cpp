#include "mmeval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "mmeval/jsonl_log.hpp"
#include "mmeval/text.hpp"

namespace mmeval {

double normalize(double raw, const Normalization& n) {
  if (!(raw >= n.raw_min && raw <= n.raw_max)) {
    throw ReportError("OutOfRange: raw score " + std::to_string(raw) + " outside [" +
                      std::to_string(n.raw_min) + ", " + std::to_string(n.raw_max) + "]");
  }
  return (raw - n.raw_min) * 100.0 / (n.raw_max - n.raw_min);
}

double merge_splits(std::span<const double> scores) {
  if (scores.empty()) throw ReportError("EmptyInput: no split scores to merge");
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

double round_half_up_1(double value) {
  // The nudge keeps decimal ties such as 75.15 (stored as 75.1499...) rounding up.
  return std::floor(value * 10.0 + 0.5 + 1e-9) / 10.0;
}

std::string format_1dp(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", round_half_up_1(value));
  return buf;
}

MetricReport make_metric_report(std::string model, std::vector<MetricEntry> entries,
                                std::span<const Normalization> normalizations,
                                std::optional<std::string> param_count) {
  if (normalizations.size() != entries.size()) {
    throw ReportError("one normalization per entry required");
  }
  MetricReport report{std::move(model), std::move(entries), 0.0, std::move(param_count)};
  double sum = 0.0;
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    auto& e = report.entries[i];
    e.normalized = normalize(e.raw, normalizations[i]);
    sum += e.normalized;
  }
  report.average = report.entries.empty() ? 0.0 : sum / static_cast<double>(report.entries.size());
  return report;
}

Leaderboard average_and_rank(std::vector<MetricReport> reports,
                             std::optional<std::vector<std::string>> column_order) {
  Leaderboard board;
  if (reports.empty()) {
    if (column_order) board.benchmarks = *column_order;
    return board;
  }

  auto names_of = [](const MetricReport& r) {
    std::set<std::string> names;
    for (const auto& e : r.entries) names.insert(e.benchmark);
    return names;
  };
  std::set<std::string> reference = column_order
                                        ? std::set<std::string>(column_order->begin(), column_order->end())
                                        : names_of(reports.front());
  for (auto& r : reports) {
    const auto names = names_of(r);
    if (names != reference || names.size() != r.entries.size()) {
      std::vector<std::string> diff;
      std::set_symmetric_difference(names.begin(), names.end(), reference.begin(), reference.end(),
                                    std::back_inserter(diff));
      throw ReportError("BenchmarkSetMismatch for " + r.model + ": " +
                        (diff.empty() ? std::string("duplicate benchmark entries")
                                      : text::join(diff, ", ")));
    }
    double sum = 0.0;
    for (const auto& e : r.entries) {
      if (!(e.normalized >= 0.0 && e.normalized <= 100.0)) {
        throw ReportError("OutOfRange: normalized score for " + r.model + "/" + e.benchmark);
      }
      sum += e.normalized;
    }
    r.average = r.entries.empty() ? 0.0 : sum / static_cast<double>(r.entries.size());
  }

  board.benchmarks = column_order ? *column_order
                                  : std::vector<std::string>(reference.begin(), reference.end());
  std::sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
    if (a.average != b.average) return a.average > b.average;
    return a.model < b.model;
  });
  board.rows = std::move(reports);
  return board;
}

ReportFormat report_format_from_string(std::string_view name) {
  if (name == "tsv") return ReportFormat::Tsv;
  if (name == "md" || name == "markdown") return ReportFormat::Markdown;
  if (name == "json") return ReportFormat::Json;
  throw std::invalid_argument("unknown format '" + std::string(name) + "' (tsv|md|json)");
}

std::string_view file_extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::Tsv: return "tsv";
    case ReportFormat::Markdown: return "md";
    case ReportFormat::Json: return "json";
  }
  return "txt";
}

namespace {

const MetricEntry* find_entry(const MetricReport& row, const std::string& benchmark) {
  for (const auto& e : row.entries) {
    if (e.benchmark == benchmark) return &e;
  }
  return nullptr;
}

std::vector<std::vector<std::string>> table_cells(const Leaderboard& board) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Rank", "Model", "Param", "Avg"};
  header.insert(header.end(), board.benchmarks.begin(), board.benchmarks.end());
  rows.push_back(std::move(header));
  for (std::size_t i = 0; i < board.rows.size(); ++i) {
    const auto& r = board.rows[i];
    std::vector<std::string> cells{std::to_string(i + 1), r.model, r.param_count.value_or("N/A"),
                                   format_1dp(r.average)};
    for (const auto& b : board.benchmarks) {
      const auto* e = find_entry(r, b);
      cells.push_back(e ? format_1dp(e->normalized) : std::string("-"));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::string emit(const Leaderboard& board, ReportFormat format) {
  switch (format) {
    case ReportFormat::Tsv: {
      std::string out;
      for (const auto& row : table_cells(board)) out += text::join(row, "\t") + "\n";
      return out;
    }
    case ReportFormat::Markdown: {
      const auto rows = table_cells(board);
      std::string out = "| " + text::join(rows.front(), " | ") + " |\n|";
      for (std::size_t i = 0; i < rows.front().size(); ++i) out += i < 2 ? " --- |" : " ---: |";
      out += "\n";
      for (std::size_t i = 1; i < rows.size(); ++i) out += "| " + text::join(rows[i], " | ") + " |\n";
      return out;
    }
    case ReportFormat::Json: {
      nlohmann::ordered_json j;
      j["schema_version"] = 1;
      j["benchmarks"] = board.benchmarks;
      auto rows = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < board.rows.size(); ++i) {
        const auto& r = board.rows[i];
        nlohmann::ordered_json row;
        row["rank"] = i + 1;
        row["model"] = r.model;
        row["param_count"] = r.param_count ? nlohmann::ordered_json(*r.param_count) : nullptr;
        row["average"] = r.average;
        row["average_display"] = format_1dp(r.average);
        auto entries = nlohmann::ordered_json::array();
        for (const auto& b : board.benchmarks) {
          if (const auto* e = find_entry(r, b)) {
            entries.push_back({{"benchmark", e->benchmark}, {"raw", e->raw}, {"normalized", e->normalized}});
          }
        }
        row["entries"] = std::move(entries);
        rows.push_back(std::move(row));
      }
      j["rows"] = std::move(rows);
      return j.dump(2) + "\n";
    }
  }
  return {};
}

std::filesystem::path emit_to_file(const Leaderboard& board, ReportFormat format,
                                   const std::filesystem::path& dir) {
  const auto path = dir / ("leaderboard." + std::string(file_extension(format)));
  write_file_atomic(path, emit(board, format));
  return path;
}

}  // namespace mmeval
