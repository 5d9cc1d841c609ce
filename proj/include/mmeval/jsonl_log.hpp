#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mmeval {

class CorruptLog : public std::runtime_error {
 public:
  CorruptLog(const std::filesystem::path& path, std::size_t line, const std::string& why);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Append-only JSON-lines file. Every append writes one whole line and
/// fsyncs it. On open, a torn final line (unterminated or unparseable) is
/// cut off the file; a bad line anywhere else is CorruptLog.
class JsonlLog {
 public:
  static JsonlLog open(const std::filesystem::path& path);

  JsonlLog(JsonlLog&& other) noexcept;
  JsonlLog& operator=(JsonlLog&& other) noexcept;
  JsonlLog(const JsonlLog&) = delete;
  JsonlLog& operator=(const JsonlLog&) = delete;
  ~JsonlLog();

  const std::filesystem::path& path() const { return path_; }
  const std::vector<nlohmann::json>& rows() const { return rows_; }
  bool repaired_torn_tail() const { return repaired_; }

  void append(const nlohmann::json& row);

  /// Replaces the whole file (write temp, fsync, rename).
  void rewrite(const std::vector<nlohmann::json>& rows);

  /// Writes bytes without a trailing newline; emulates a crash mid-write.
  void append_torn(std::string_view bytes);

 private:
  JsonlLog(std::filesystem::path path, int fd, std::vector<nlohmann::json> rows, bool repaired);
  void write_all(std::string_view bytes);

  std::filesystem::path path_;
  int fd_ = -1;
  std::vector<nlohmann::json> rows_;
  bool repaired_ = false;
};

/// Writes `content` to `path` atomically (temp file, fsync, rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace mmeval
