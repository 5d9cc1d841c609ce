#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmeval {

// Standard alphabet, '=' padding required (RFC 4648 section 4).
std::string base64_encode(std::string_view bytes);

// Returns nullopt on any malformed input: bad alphabet, length not a
// multiple of four, misplaced padding, or non-zero trailing bits.
std::optional<std::string> base64_decode(std::string_view text);

// Same acceptance rule as base64_decode, without materializing the bytes.
// An empty string is rejected.
bool is_valid_base64(std::string_view text);

}  // namespace mmeval
