#include "mmeval/jsonl_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <system_error>
#include <utility>

#include "mmeval/dataset.hpp"

namespace mmeval {
namespace {

[[noreturn]] void throw_errno(const std::string& what) {
  throw std::system_error(errno, std::generic_category(), what);
}

void write_fd(int fd, std::string_view bytes, const std::filesystem::path& path) {
  while (!bytes.empty()) {
    const ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("write " + path.string());
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

CorruptLog::CorruptLog(const std::filesystem::path& path, std::size_t line, const std::string& why)
    : std::runtime_error("CorruptLog: " + path.string() + " line " + std::to_string(line) + ": " +
                         why),
      line_(line) {}

JsonlLog::JsonlLog(std::filesystem::path path, int fd, std::vector<nlohmann::json> rows,
                   bool repaired)
    : path_(std::move(path)), fd_(fd), rows_(std::move(rows)), repaired_(repaired) {}

JsonlLog::JsonlLog(JsonlLog&& other) noexcept
    : path_(std::move(other.path_)),
      fd_(std::exchange(other.fd_, -1)),
      rows_(std::move(other.rows_)),
      repaired_(other.repaired_) {}

JsonlLog& JsonlLog::operator=(JsonlLog&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(other.path_);
    fd_ = std::exchange(other.fd_, -1);
    rows_ = std::move(other.rows_);
    repaired_ = other.repaired_;
  }
  return *this;
}

JsonlLog::~JsonlLog() {
  if (fd_ >= 0) ::close(fd_);
}

JsonlLog JsonlLog::open(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::string content;
  if (std::filesystem::exists(path)) content = read_file(path);

  std::vector<nlohmann::json> rows;
  std::size_t good_end = 0;  // byte offset just past the last good line
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool torn = false;
  while (pos < content.size()) {
    ++line_no;
    const auto nl = content.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const auto end = terminated ? nl : content.size();
    const bool last = !terminated || end + 1 == content.size();
    auto row = nlohmann::json::parse(std::string_view(content).substr(pos, end - pos), nullptr,
                                     /*allow_exceptions=*/false);
    const bool ok = terminated && !row.is_discarded() && row.is_object();
    if (!ok) {
      if (!last) throw CorruptLog(path, line_no, "unparseable line before the end of the log");
      torn = true;
      break;
    }
    rows.push_back(std::move(row));
    good_end = end + 1;
    pos = end + 1;
  }

  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("open " + path.string());
  if (torn) {
    if (::ftruncate(fd, static_cast<off_t>(good_end)) != 0 || ::fsync(fd) != 0) {
      const int err = errno;
      ::close(fd);
      throw std::system_error(err, std::generic_category(), "truncate " + path.string());
    }
  }
  return JsonlLog(path, fd, std::move(rows), torn);
}

void JsonlLog::write_all(std::string_view bytes) { write_fd(fd_, bytes, path_); }

void JsonlLog::append(const nlohmann::json& row) {
  std::string line = row.dump();
  line += '\n';
  write_all(line);
  if (::fsync(fd_) != 0) throw_errno("fsync " + path_.string());
  rows_.push_back(row);
}

void JsonlLog::append_torn(std::string_view bytes) {
  write_all(bytes);
  ::fsync(fd_);
}

void JsonlLog::rewrite(const std::vector<nlohmann::json>& rows) {
  std::string content;
  for (const auto& row : rows) {
    content += row.dump();
    content += '\n';
  }
  write_file_atomic(path_, content);
  ::close(fd_);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (fd_ < 0) throw_errno("reopen " + path_.string());
  rows_ = rows;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("open " + tmp.string());
  try {
    write_fd(fd, content, tmp);
    if (::fsync(fd) != 0) throw_errno("fsync " + tmp.string());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  std::filesystem::rename(tmp, path);
}

}  // namespace mmeval
