#include "mmeval/base64.hpp"

#include <array>

namespace mmeval {
namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

constexpr std::array<std::int8_t, 256> make_reverse_table() {
  std::array<std::int8_t, 256> table{};
  for (auto& v : table) v = -1;
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) {
    table[static_cast<unsigned char>(kAlphabet[i])] = static_cast<std::int8_t>(i);
  }
  return table;
}

constexpr auto kReverse = make_reverse_table();

// Walks the input once; calls sink(byte) for every decoded byte.
template <typename Sink>
bool decode_into(std::string_view text, Sink&& sink) {
  if (text.empty() || text.size() % 4 != 0) return false;
  const std::size_t groups = text.size() / 4;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::string_view quad = text.substr(g * 4, 4);
    const bool last = g + 1 == groups;
    int pad = 0;
    if (quad[3] == '=') {
      if (!last) return false;
      pad = quad[2] == '=' ? 2 : 1;
    } else if (quad[2] == '=') {
      return false;
    }
    std::uint32_t acc = 0;
    for (int i = 0; i < 4 - pad; ++i) {
      const auto v = kReverse[static_cast<unsigned char>(quad[i])];
      if (v < 0) return false;
      acc |= static_cast<std::uint32_t>(v) << (18 - 6 * i);
    }
    // Bits below the last emitted byte must be zero for a canonical encoding.
    if (pad == 1 && (acc & 0xFF) != 0) return false;
    if (pad == 2 && (acc & 0xFFFF) != 0) return false;
    sink(static_cast<char>((acc >> 16) & 0xFF));
    if (pad < 2) sink(static_cast<char>((acc >> 8) & 0xFF));
    if (pad < 1) sink(static_cast<char>(acc & 0xFF));
  }
  return true;
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::optional<std::string> base64_decode(std::string_view text) {
  std::string out;
  out.reserve(text.size() / 4 * 3);
  if (!decode_into(text, [&](char c) { out.push_back(c); })) return std::nullopt;
  return out;
}

bool is_valid_base64(std::string_view text) {
  return decode_into(text, [](char) {});
}

}  // namespace mmeval
