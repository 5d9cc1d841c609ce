#include "mmeval/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mmeval/base64.hpp"
#include "mmeval/text.hpp"

namespace mmeval {
namespace {

using nlohmann::json;

struct Columns {
  std::size_t count = 0;
  std::size_t index = 0;
  std::size_t question = 0;
  std::size_t answer = 0;
  std::optional<std::size_t> image;
  std::optional<std::size_t> category;
  std::vector<std::pair<char, std::size_t>> choices;
  std::vector<std::pair<std::string, std::size_t>> extras;
};

bool is_choice_column(std::string_view name) {
  return name.size() == 1 && name[0] >= 'A' && name[0] <= 'Z';
}

std::optional<std::vector<std::string>> parse_string_array(std::string_view cell) {
  const json parsed = json::parse(cell, nullptr, /*allow_exceptions=*/false);
  if (!parsed.is_array() || parsed.empty()) return std::nullopt;
  std::vector<std::string> out;
  for (const auto& item : parsed) {
    if (!item.is_string()) return std::nullopt;
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string dump_string_array(const std::vector<std::string>& values) {
  return json(values).dump();
}

class TsvParser {
 public:
  TsvParser(std::string_view text, const BenchmarkMeta* meta) : text_(text), meta_(meta) {}

  std::vector<BenchmarkRecord> run() {
    auto lines = text::split(text_, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    for (auto& line : lines) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
    }
    if (lines.empty()) {
      report(DatasetErrorKind::MissingColumn, 1, "empty file; need index, question, answer");
      return {};
    }
    if (!parse_header(lines.front())) return {};
    for (std::size_t i = 1; i < lines.size(); ++i) {
      ++rows_;
      parse_row(lines[i], i + 1);
    }
    return std::move(records_);
  }

  std::vector<Diagnostic>& diagnostics() { return diagnostics_; }
  std::size_t rows() const { return rows_; }

 private:
  void report(DatasetErrorKind kind, std::size_t line, std::string message) {
    diagnostics_.push_back({kind, line, std::move(message)});
  }

  bool parse_header(const std::string& line) {
    if (text::trim(line).empty()) {
      report(DatasetErrorKind::MissingColumn, 1, "empty header; need index, question, answer");
      return false;
    }
    const auto names = text::split(line, '\t');
    cols_.count = names.size();
    std::set<std::string> seen;
    std::optional<std::size_t> index, question, answer;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string& name = names[i];
      if (!seen.insert(name).second) {
        report(DatasetErrorKind::MalformedRow, 1, "duplicate column '" + name + "'");
        return false;
      }
      if (name == "index") {
        index = i;
      } else if (name == "question") {
        question = i;
      } else if (name == "answer") {
        answer = i;
      } else if (name == "image") {
        cols_.image = i;
      } else if (name == "category") {
        cols_.category = i;
      } else if (is_choice_column(name)) {
        cols_.choices.emplace_back(name[0], i);
      } else {
        cols_.extras.emplace_back(name, i);
      }
    }
    std::vector<std::string> missing;
    if (!index) missing.emplace_back("index");
    if (!question) missing.emplace_back("question");
    if (!answer) missing.emplace_back("answer");
    if (!missing.empty()) {
      report(DatasetErrorKind::MissingColumn, 1,
             "missing required column(s): " + text::join(missing, ", "));
      return false;
    }
    cols_.index = *index;
    cols_.question = *question;
    cols_.answer = *answer;
    std::sort(cols_.choices.begin(), cols_.choices.end());
    return true;
  }

  void parse_row(const std::string& line, std::size_t line_no) {
    const auto cells = text::split(line, '\t');
    if (cells.size() != cols_.count) {
      report(DatasetErrorKind::EmbeddedTabOrNewline, line_no,
             "expected " + std::to_string(cols_.count) + " cells, found " +
                 std::to_string(cells.size()));
      return;
    }
    for (const auto& cell : cells) {
      if (cell.find('\r') != std::string::npos) {
        report(DatasetErrorKind::EmbeddedTabOrNewline, line_no, "carriage return inside a cell");
        return;
      }
    }

    const std::size_t before = diagnostics_.size();
    BenchmarkRecord rec;

    const std::string& index_cell = cells[cols_.index];
    std::int64_t index = 0;
    const auto [ptr, ec] =
        std::from_chars(index_cell.data(), index_cell.data() + index_cell.size(), index);
    if (index_cell.empty() || ec != std::errc{} || ptr != index_cell.data() + index_cell.size()) {
      report(DatasetErrorKind::MalformedRow, line_no, "index '" + index_cell + "' is not an integer");
    } else if (index < 0) {
      report(DatasetErrorKind::MalformedRow, line_no, "negative index " + index_cell);
    } else if (!indices_.insert(index).second) {
      report(DatasetErrorKind::DuplicateIndex, line_no, "duplicate index " + index_cell);
    }
    rec.index = index;
    rec.question = text::unescape_cell(cells[cols_.question]);

    const std::string& answer_cell = cells[cols_.answer];
    std::optional<std::vector<std::string>> refs;
    if (!answer_cell.empty() && answer_cell.front() == '[') refs = parse_string_array(answer_cell);
    rec.answers = refs ? *refs : std::vector<std::string>{text::unescape_cell(answer_cell)};

    if (cols_.image && !cells[*cols_.image].empty()) {
      const std::string& cell = cells[*cols_.image];
      if (cell.front() == '[') {
        auto list = parse_string_array(cell);
        if (!list) {
          report(DatasetErrorKind::BadBase64, line_no, "image cell is not a JSON array of strings");
        } else {
          rec.images = std::move(*list);
        }
      } else {
        rec.images.push_back(cell);
      }
      for (std::size_t k = 0; k < rec.images.size(); ++k) {
        if (!is_valid_base64(rec.images[k])) {
          report(DatasetErrorKind::BadBase64, line_no,
                 "image " + std::to_string(k + 1) + " is not valid base64");
        }
      }
    }

    for (const auto& [label, col] : cols_.choices) {
      if (!cells[col].empty()) rec.choices.emplace(label, text::unescape_cell(cells[col]));
    }
    if (!rec.choices.empty()) {
      char expect = 'A';
      bool contiguous = true;
      for (const auto& [label, _] : rec.choices) {
        if (label != expect++) contiguous = false;
      }
      if (!contiguous || rec.choices.size() < 2) {
        report(DatasetErrorKind::MalformedRow, line_no,
               "options must be a contiguous run A, B, ... with at least two entries");
      } else if (rec.answers.size() != 1 || rec.answer().size() != 1 ||
                 !rec.choices.contains(rec.answer()[0])) {
        report(DatasetErrorKind::AnswerNotInChoices, line_no,
               "answer '" + answer_cell + "' is not one of the option labels");
      }
    }

    if (cols_.category && !cells[*cols_.category].empty()) {
      rec.category = text::unescape_cell(cells[*cols_.category]);
    }
    for (const auto& [name, col] : cols_.extras) rec.extras.emplace_back(name, cells[col]);

    if (diagnostics_.size() != before) return;
    if (meta_) {
      try {
        classify_question_type(*meta_, rec);
      } catch (const DatasetError& e) {
        report(DatasetErrorKind::InconsistentMeta, line_no, e.diagnostic().message);
        return;
      }
    }
    records_.push_back(std::move(rec));
  }

  std::string_view text_;
  const BenchmarkMeta* meta_;
  Columns cols_;
  std::unordered_set<std::int64_t> indices_;
  std::vector<BenchmarkRecord> records_;
  std::vector<Diagnostic> diagnostics_;
  std::size_t rows_ = 0;
};

double parse_number(std::string_view value, std::string_view key) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw DatasetError({DatasetErrorKind::BadManifest, 0,
                        "manifest key '" + std::string(key) + "' is not a number"});
  }
  return out;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(QuestionType type) {
  switch (type) {
    case QuestionType::Mcq: return "MCQ";
    case QuestionType::YesNo: return "YN";
    case QuestionType::OpenVqa: return "OPEN_VQA";
    case QuestionType::OpenJudged: return "OPEN_JUDGED";
  }
  return "?";
}

QuestionType question_type_from_string(std::string_view name) {
  if (name == "MCQ") return QuestionType::Mcq;
  if (name == "YN") return QuestionType::YesNo;
  if (name == "OPEN_VQA") return QuestionType::OpenVqa;
  if (name == "OPEN_JUDGED") return QuestionType::OpenJudged;
  throw DatasetError({DatasetErrorKind::BadManifest, 0,
                      "unknown question type '" + std::string(name) + "'"});
}

std::string_view to_string(DatasetErrorKind kind) {
  switch (kind) {
    case DatasetErrorKind::MissingColumn: return "MissingColumn";
    case DatasetErrorKind::DuplicateIndex: return "DuplicateIndex";
    case DatasetErrorKind::BadBase64: return "BadBase64";
    case DatasetErrorKind::AnswerNotInChoices: return "AnswerNotInChoices";
    case DatasetErrorKind::EmbeddedTabOrNewline: return "EmbeddedTabOrNewline";
    case DatasetErrorKind::MalformedRow: return "MalformedRow";
    case DatasetErrorKind::InconsistentMeta: return "InconsistentMeta";
    case DatasetErrorKind::BadManifest: return "BadManifest";
    case DatasetErrorKind::Io: return "Io";
  }
  return "?";
}

DatasetError::DatasetError(Diagnostic diagnostic)
    : std::runtime_error(std::string(to_string(diagnostic.kind)) +
                         (diagnostic.line ? " (line " + std::to_string(diagnostic.line) + ")" : "") +
                         ": " + diagnostic.message),
      diagnostic_(std::move(diagnostic)) {}

std::vector<BenchmarkRecord> parse_benchmark_tsv(std::string_view tsv) {
  TsvParser parser(tsv, nullptr);
  auto records = parser.run();
  auto& diags = parser.diagnostics();
  if (!diags.empty()) {
    std::stable_sort(diags.begin(), diags.end(),
                     [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
    throw DatasetError(diags.front());
  }
  return records;
}

ValidationReport validate_benchmark_tsv(std::string_view tsv, const BenchmarkMeta* meta) {
  TsvParser parser(tsv, meta);
  parser.run();
  return {std::move(parser.diagnostics()), parser.rows()};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError({DatasetErrorKind::Io, 0, "cannot read " + path.string()});
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<BenchmarkRecord> load_benchmark(const std::filesystem::path& tsv) {
  return parse_benchmark_tsv(read_file(tsv));
}

ValidationReport validate_benchmark(const std::filesystem::path& tsv) {
  const std::string content = read_file(tsv);
  const auto manifest = manifest_path_for(tsv);
  if (std::filesystem::exists(manifest)) {
    BenchmarkMeta meta;
    try {
      meta = load_manifest(manifest);
    } catch (const DatasetError& e) {
      ValidationReport report = validate_benchmark_tsv(content);
      report.violations.insert(report.violations.begin(), e.diagnostic());
      return report;
    }
    return validate_benchmark_tsv(content, &meta);
  }
  return validate_benchmark_tsv(content);
}

Benchmark open_benchmark(const std::filesystem::path& tsv,
                         std::optional<std::filesystem::path> manifest) {
  Benchmark bench;
  bench.records = load_benchmark(tsv);
  const auto manifest_path = manifest.value_or(manifest_path_for(tsv));
  if (manifest || std::filesystem::exists(manifest_path)) {
    bench.meta = load_manifest(manifest_path);
  } else {
    bench.meta.name = tsv.stem().string();
    const bool any_choices = std::any_of(bench.records.begin(), bench.records.end(),
                                         [](const BenchmarkRecord& r) { return r.is_mcq(); });
    bench.meta.question_type = any_choices ? QuestionType::Mcq : QuestionType::OpenVqa;
  }
  bench.meta.record_count = bench.records.size();
  return bench;
}

std::string serialize_benchmark_tsv(std::span<const BenchmarkRecord> records) {
  bool any_image = false;
  bool any_category = false;
  char max_label = 0;
  std::vector<std::string> extra_names;
  for (const auto& r : records) {
    any_image = any_image || !r.images.empty();
    any_category = any_category || r.category.has_value();
    if (!r.choices.empty()) max_label = std::max(max_label, r.choices.rbegin()->first);
    for (const auto& [name, _] : r.extras) {
      if (std::find(extra_names.begin(), extra_names.end(), name) == extra_names.end()) {
        extra_names.push_back(name);
      }
    }
  }

  std::vector<std::string> header{"index", "question", "answer"};
  if (any_image) header.emplace_back("image");
  if (max_label) {
    for (char c = 'A'; c <= max_label; ++c) header.emplace_back(1, c);
  }
  if (any_category) header.emplace_back("category");
  header.insert(header.end(), extra_names.begin(), extra_names.end());

  std::string out = text::join(header, "\t");
  out += '\n';
  for (const auto& r : records) {
    std::vector<std::string> cells;
    cells.push_back(std::to_string(r.index));
    cells.push_back(text::escape_cell(r.question));
    const bool as_array = r.answers.size() > 1 || (!r.answer().empty() && r.answer().front() == '[');
    cells.push_back(as_array ? dump_string_array(r.answers) : text::escape_cell(r.answer()));
    if (any_image) {
      if (r.images.empty()) {
        cells.emplace_back();
      } else if (r.images.size() == 1) {
        cells.push_back(r.images.front());
      } else {
        cells.push_back(dump_string_array(r.images));
      }
    }
    if (max_label) {
      for (char c = 'A'; c <= max_label; ++c) {
        const auto it = r.choices.find(c);
        cells.push_back(it == r.choices.end() ? std::string() : text::escape_cell(it->second));
      }
    }
    if (any_category) cells.push_back(r.category ? text::escape_cell(*r.category) : std::string());
    for (const auto& name : extra_names) {
      const auto it = std::find_if(r.extras.begin(), r.extras.end(),
                                   [&](const auto& kv) { return kv.first == name; });
      std::string value = it == r.extras.end() ? std::string() : it->second;
      if (value.find_first_of("\t\n\r") != std::string::npos) {
        throw std::invalid_argument("extra column '" + name + "' contains a tab or newline");
      }
      cells.push_back(std::move(value));
    }
    out += text::join(cells, "\t");
    out += '\n';
  }
  return out;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& tsv) {
  auto p = tsv;
  p.replace_extension(".manifest");
  return p;
}

BenchmarkMeta parse_manifest(std::string_view content) {
  BenchmarkMeta meta;
  bool have_name = false;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(content, '\n')) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw DatasetError({DatasetErrorKind::BadManifest, line_no, "expected 'key = value'"});
    }
    const auto key = text::trim(line.substr(0, eq));
    const auto value = text::trim(line.substr(eq + 1));
    if (key == "name") {
      if (value.empty()) throw DatasetError({DatasetErrorKind::BadManifest, line_no, "empty name"});
      meta.name = std::string(value);
      have_name = true;
    } else if (key == "question_type") {
      meta.question_type = question_type_from_string(value);
    } else if (key == "raw_min") {
      meta.normalization.raw_min = parse_number(value, key);
    } else if (key == "raw_max") {
      meta.normalization.raw_max = parse_number(value, key);
    } else {
      throw DatasetError({DatasetErrorKind::BadManifest, line_no,
                          "unknown manifest key '" + std::string(key) + "'"});
    }
  }
  if (!have_name) throw DatasetError({DatasetErrorKind::BadManifest, 0, "manifest lacks 'name'"});
  if (!(meta.normalization.raw_max > meta.normalization.raw_min)) {
    throw DatasetError({DatasetErrorKind::BadManifest, 0, "raw_max must exceed raw_min"});
  }
  return meta;
}

BenchmarkMeta load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path));
}

std::string serialize_manifest(const BenchmarkMeta& meta) {
  std::string out;
  out += "name = " + meta.name + "\n";
  out += "question_type = " + std::string(to_string(meta.question_type)) + "\n";
  out += "raw_min = " + format_number(meta.normalization.raw_min) + "\n";
  out += "raw_max = " + format_number(meta.normalization.raw_max) + "\n";
  return out;
}

QuestionType classify_question_type(const BenchmarkMeta& meta, const BenchmarkRecord& record) {
  if (record.is_mcq()) return QuestionType::Mcq;
  switch (meta.question_type) {
    case QuestionType::Mcq:
      throw DatasetError({DatasetErrorKind::InconsistentMeta, 0,
                          "benchmark '" + meta.name + "' is MCQ but sample " +
                              std::to_string(record.index) + " has no options"});
    case QuestionType::YesNo:
      if (record.answers.size() == 1 &&
          (text::iequals(record.answer(), "yes") || text::iequals(record.answer(), "no"))) {
        return QuestionType::YesNo;
      }
      throw DatasetError({DatasetErrorKind::InconsistentMeta, 0,
                          "benchmark '" + meta.name + "' is YN but sample " +
                              std::to_string(record.index) + " has gold '" + record.answer() + "'"});
    case QuestionType::OpenVqa:
    case QuestionType::OpenJudged:
      return meta.question_type;
  }
  return meta.question_type;
}

}  // namespace mmeval
