#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mmeval::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Lowercase ASCII words (maximal runs of [A-Za-z0-9]).
std::vector<std::string> words(std::string_view s);

// Lowercase, map ASCII punctuation to spaces, collapse whitespace, trim.
std::string fold(std::string_view s);

// True when `needle` occurs in `haystack` with no alphanumeric byte on
// either side of the occurrence.
bool contains_at_word_boundary(std::string_view haystack, std::string_view needle);

bool iequals(std::string_view a, std::string_view b);

// TSV cell escaping: backslash, newline, tab and carriage return become
// two-character escapes. Unknown escapes are kept verbatim on decode.
std::string escape_cell(std::string_view s);
std::string unescape_cell(std::string_view s);

// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string sha256_hex(std::string_view bytes);

std::string utc_timestamp_now();

}  // namespace mmeval::text
