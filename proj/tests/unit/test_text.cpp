#include <gtest/gtest.h>

#include "forge/text.hpp"
#include "forge/types.hpp"
#include "test_util.hpp"

using namespace forge;

TEST(Text, SplitWordsIgnoresRepeatedWhitespace) {
  auto w = text::split_words("  a \t b\nc  ");
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0], "a");
  EXPECT_EQ(w[2], "c");
  EXPECT_TRUE(text::split_words("   ").empty());
}

TEST(Text, Utf8RoundTrip) {
  const std::string s = "a고양이猫";
  auto cps = text::decode_utf8(s);
  ASSERT_EQ(cps.size(), 5u);
  std::string back;
  for (auto c : cps) back += text::encode_utf8(c);
  EXPECT_EQ(back, s);
  EXPECT_EQ(text::codepoint_count("네"), 1u);
}

TEST(Text, InvalidUtf8BecomesReplacement) {
  auto cps = text::decode_utf8(std::string("\xff") + "a");
  ASSERT_EQ(cps.size(), 2u);
  EXPECT_EQ(cps[0], U'�');
}

TEST(Text, Fnv1aKnownVectors) {
  EXPECT_EQ(text::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(text::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(text::hex64(0xabcULL), "0000000000000abc");
}

TEST(Text, ForkSeedSeparatesLabels) {
  EXPECT_EQ(text::fork_seed(1, "generate"), text::fork_seed(1, "generate"));
  EXPECT_NE(text::fork_seed(1, "generate"), text::fork_seed(1, "judge"));
  EXPECT_NE(text::fork_seed(1, "generate"), text::fork_seed(2, "generate"));
}

TEST(Text, Base64) {
  EXPECT_EQ(text::base64_encode(""), "");
  EXPECT_EQ(text::base64_encode("f"), "Zg==");
  EXPECT_EQ(text::base64_encode("fo"), "Zm8=");
  EXPECT_EQ(text::base64_encode("foobar"), "Zm9vYmFy");
}

TEST(Text, Levenshtein) {
  EXPECT_EQ(text::levenshtein("kitten", "sitting"), 3u);
  EXPECT_EQ(text::levenshtein("", "abc"), 3u);
}

TEST(Text, ReadMissingFileNamesPath) {
  auto e = forge_test::error_of([] { text::read_file("/nonexistent/x.json"); });
  EXPECT_EQ(e.kind(), ErrorKind::kIo);
  EXPECT_NE(std::string(e.what()).find("/nonexistent/x.json"), std::string::npos);
}

TEST(Money, ExactMicros) {
  auto c = Money::from_dollars(0.0125);
  EXPECT_EQ(c.micros(), 12500);
  EXPECT_EQ((c * 40).micros(), 500000);
  EXPECT_EQ(forge_test::kind_of([] { Money::from_dollars(-1); }), ErrorKind::kContract);
}

TEST(Types, KindAndLanguageStrings) {
  for (auto k : kAllDataKinds) EXPECT_EQ(parse_data_kind(to_string(k)), k);
  for (auto l : kAllLanguages) EXPECT_EQ(parse_language(to_string(l)), l);
  EXPECT_THROW(parse_language("fr"), Error);
}
