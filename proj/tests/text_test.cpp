#include <gtest/gtest.h>

#include "mmeval/base64.hpp"
#include "mmeval/text.hpp"
#include "support.hpp"

using namespace mmeval;

TEST(Base64, KnownVectors) {
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foo"), "Zm9v");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(base64_decode("Zm9vYmFy").value(), "foobar");
  EXPECT_EQ(base64_decode("Zm8=").value(), "fo");
}

TEST(Base64, RejectsMalformedPayloads) {
  EXPECT_FALSE(base64_decode("").has_value());
  EXPECT_FALSE(base64_decode("Zm9").has_value());    // truncated
  EXPECT_FALSE(base64_decode("Zm9v!").has_value());  // bad alphabet
  EXPECT_FALSE(base64_decode("Zg=").has_value());
  EXPECT_FALSE(base64_decode("Zh==").has_value());  // non-canonical trailing bits
  EXPECT_FALSE(is_valid_base64("Z"));
}

TEST(Base64, RoundTripProperty) {
  fixtures::Gen gen(11);
  for (int i = 0; i < 500; ++i) {
    std::string bytes(static_cast<std::size_t>(gen.between(1, 64)), '\0');
    for (auto& b : bytes) b = static_cast<char>(gen.between(0, 255));
    const auto encoded = base64_encode(bytes);
    ASSERT_EQ(base64_decode(encoded).value(), bytes);
    // Dropping one character always breaks the payload.
    ASSERT_FALSE(base64_decode(encoded.substr(0, encoded.size() - 1)).has_value());
  }
}

TEST(Text, CellEscapingRoundTrips) {
  EXPECT_EQ(text::escape_cell("a\tb\nc\\d\re"), "a\\tb\\nc\\\\d\\re");
  EXPECT_EQ(text::unescape_cell("a\\tb\\nc\\\\d\\re"), "a\tb\nc\\d\re");
  EXPECT_EQ(text::unescape_cell("keep \\x as is"), "keep \\x as is");
  fixtures::Gen gen(5);
  for (int i = 0; i < 300; ++i) {
    const auto s = gen.text(0, 30);
    const auto e = text::escape_cell(s);
    ASSERT_EQ(e.find_first_of("\t\n\r"), std::string::npos);
    ASSERT_EQ(text::unescape_cell(e), s);
  }
}

TEST(Text, FoldAndWordBoundaries) {
  EXPECT_EQ(text::fold("  The  Cat, sat! "), "the cat sat");
  EXPECT_TRUE(text::contains_at_word_boundary("a cat sat", "cat"));
  EXPECT_FALSE(text::contains_at_word_boundary("category", "cat"));
  EXPECT_FALSE(text::contains_at_word_boundary("concat", "cat"));
  EXPECT_TRUE(text::contains_at_word_boundary("cat", "cat"));
}

TEST(Text, SplitJoinTrim) {
  EXPECT_EQ(text::split("a\tb\t", '\t'), (std::vector<std::string>{"a", "b", ""}));
  EXPECT_EQ(text::join({"x", "y", "z"}, ", "), "x, y, z");
  EXPECT_EQ(text::trim("  x y \n"), "x y");
  EXPECT_TRUE(text::iequals("YeS", "yes"));
}

TEST(Text, Sha256KnownVector) {
  EXPECT_EQ(text::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
