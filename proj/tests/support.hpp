#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "mmeval/base64.hpp"
#include "mmeval/dataset.hpp"

namespace mmeval::fixtures {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(MMEVAL_TEST_DATA) / name;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "mmeval-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << content;
}

// Hand-rolled generators for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }

  int between(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  // Printable text that may contain the characters the codec must escape.
  std::string text(int min_len, int max_len) {
    static const std::string alphabet =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,;:!?()[]{}\"'-_/";
    static const std::vector<std::string> specials{"\n", "\t", "\\", "\r", "\\n", "é", "猫"};
    const int len = between(min_len, max_len);
    std::string out;
    for (int i = 0; i < len; ++i) {
      if (coin(0.08)) {
        out += specials[between(0, static_cast<int>(specials.size()) - 1)];
      } else {
        out += alphabet[between(0, static_cast<int>(alphabet.size()) - 1)];
      }
    }
    if (std::string_view(out).find_first_not_of(" \t\r\n") == std::string::npos) out = "q" + out;
    return out;
  }

  std::string image() {
    std::string bytes(static_cast<std::size_t>(between(1, 40)), '\0');
    for (auto& b : bytes) b = static_cast<char>(between(0, 255));
    return base64_encode(bytes);
  }

  // A random valid benchmark with a consistent column set.
  std::vector<BenchmarkRecord> benchmark() {
    const int rows = between(1, 12);
    const int n_options = coin(0.7) ? between(2, 6) : 0;
    const bool images = coin(0.6);
    const bool category = coin(0.5);
    const int n_extras = between(0, 2);
    std::vector<BenchmarkRecord> out;
    std::int64_t index = between(0, 5);
    for (int r = 0; r < rows; ++r) {
      BenchmarkRecord rec;
      rec.index = index;
      index += between(1, 7);
      rec.question = text(1, 40);
      if (n_options > 0) {
        for (int o = 0; o < n_options; ++o) rec.choices['A' + o] = text(1, 12);
        rec.answers = {std::string(1, static_cast<char>('A' + between(0, n_options - 1)))};
      } else if (coin(0.3)) {
        rec.answers = {text(1, 8), text(1, 8), text(0, 8)};
      } else {
        rec.answers = {text(0, 16)};
      }
      if (images) {
        const int k = between(0, 3);
        for (int i = 0; i < k; ++i) rec.images.push_back(image());
      }
      if (category) rec.category = text(0, 10);
      for (int e = 0; e < n_extras; ++e) {
        // Extras are carried verbatim and may not hold tabs or newlines.
        std::string v = text(0, 10);
        for (auto& c : v) {
          if (c == '\t' || c == '\n' || c == '\r') c = ' ';
        }
        rec.extras.emplace_back("extra" + std::to_string(e), v);
      }
      out.push_back(std::move(rec));
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace mmeval::fixtures
