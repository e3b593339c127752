#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "forge/text.hpp"
#include "forge/vocab.hpp"
#include "test_util.hpp"

using namespace forge;
using namespace forge::vocab;

namespace {

Vocabulary numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> t;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back(prefix + std::to_string(i));
  return Vocabulary(std::move(t));
}

EmbeddingTable table(std::uint32_t rows, std::uint32_t dim) {
  EmbeddingTable t{rows, dim, {}};
  for (std::uint32_t i = 0; i < rows * dim; ++i) t.values.push_back(static_cast<float>(i) * 0.25f - 1.0f);
  return t;
}

}  // namespace

TEST(Vocab, DisjointExpansionReachesTargetSize) {
  auto base = numbered("▁base", 32'000);
  auto add = numbered("한", 7'478).tokens();
  const auto t0 = std::chrono::steady_clock::now();
  auto [merged, report] = merge_vocab(base, add);
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_EQ(merged.size(), 39'478u);
  EXPECT_EQ(report.final_size, 39'478u);
  EXPECT_EQ(report.added_effective, 7'478u);
  EXPECT_TRUE(report.overlap.empty());
  for (std::size_t i = 0; i < base.size(); ++i) ASSERT_EQ(merged.token(i), base.token(i));
  EXPECT_EQ(merged.id("한0"), 32'000u);
  EXPECT_LT(elapsed, std::chrono::seconds(1));
}

TEST(Vocab, EmptyAdditionsIsIdentity) {
  auto base = numbered("t", 10);
  auto [merged, r] = merge_vocab(base, {});
  EXPECT_EQ(merged, base);
  EXPECT_EQ(r.added_requested, 0u);
  EXPECT_EQ(r.added_effective, 0u);
  EXPECT_EQ(r.final_size, 10u);
}

TEST(Vocab, OverlapsAgainstSetUnionOracle) {
  auto base = numbered("t", 10);
  std::vector<std::string> add{"t3", "new1", "t7", "new2", "new3"};
  auto [merged, r] = merge_vocab(base, add);
  std::set<std::string> uni(base.tokens().begin(), base.tokens().end());
  uni.insert(add.begin(), add.end());
  EXPECT_EQ(merged.size(), uni.size());
  EXPECT_EQ(merged.size(), 13u);
  EXPECT_EQ(r.overlap, (std::vector<std::string>{"t3", "t7"}));
  EXPECT_EQ(r.added_effective, r.added_requested - r.overlap.size());
}

TEST(Vocab, RepeatsWithinAdditionsAreReportedNotFatal) {
  auto [merged, r] = merge_vocab(numbered("t", 2), {"x", "x", "t0", "y"});
  EXPECT_EQ(merged.tokens(), (std::vector<std::string>{"t0", "t1", "x", "y"}));
  EXPECT_EQ(r.repeated_in_additions, 1u);
  EXPECT_EQ(r.overlap_with_base, 1u);
  EXPECT_EQ(r.overlap, (std::vector<std::string>{"x", "t0"}));
}

TEST(Vocab, DuplicateBaseTokenIsConflict) {
  EXPECT_EQ(forge_test::kind_of([] { Vocabulary({"a", "b", "a"}); }), ErrorKind::kConflict);
}

TEST(VocabProperty, IdStabilityAndIdempotence) {
  std::mt19937 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    auto base = numbered("b", rng() % 30);
    std::vector<std::string> add;
    for (int i = 0, n = rng() % 30; i < n; ++i) add.push_back((rng() % 2 ? "b" : "n") + std::to_string(rng() % 40));
    auto [once, r1] = merge_vocab(base, add);
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(once.id(base.token(i)), i);
    auto [twice, r2] = merge_vocab(once, add);
    EXPECT_EQ(twice, once);
    EXPECT_EQ(r2.added_effective, 0u);
    EXPECT_EQ(r1.final_size, r1.base_size + r1.added_effective);
    EXPECT_EQ(r1.added_effective, r1.added_requested - r1.overlap.size());
  }
}

TEST(Vocab, ExtendPreservesRowsBitForBit) {
  auto t = table(10, 4);
  auto e = extend_embeddings(t, 3, 42);
  EXPECT_EQ(e.rows, 13u);
  EXPECT_EQ(e.dim, 4u);
  EXPECT_EQ(std::memcmp(e.values.data(), t.values.data(), t.values.size() * sizeof(float)), 0);
  EXPECT_EQ(extend_embeddings(t, 0, 42), t);
  EXPECT_EQ(forge_test::kind_of([&] { extend_embeddings(t, -1, 42); }), ErrorKind::kRange);
}

TEST(Vocab, ExtendIsSeedDeterministic) {
  auto t = table(2, 8);
  auto a = serialize_embeddings(extend_embeddings(t, 50, 7));
  auto b = serialize_embeddings(extend_embeddings(t, 50, 7));
  auto c = serialize_embeddings(extend_embeddings(t, 50, 8));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Vocab, NewRowsLookNormalWithDocumentedScale) {
  auto e = extend_embeddings(EmbeddingTable{0, 64, {}}, 500, 3);
  double sum = 0, sq = 0;
  for (float v : e.values) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(e.values.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.002);
  EXPECT_NEAR(sd, kDefaultInitStddev, 0.001);
}

TEST(Vocab, ScriptDistribution) {
  auto latin = script_distribution(Vocabulary({"the", "cat"}));
  EXPECT_EQ(latin.at(Script::kLatin), 1.0);
  EXPECT_EQ(latin.at(Script::kHangul), 0.0);
  auto mixed = script_distribution(Vocabulary({"the", "cat", "고양이", "猫"}));
  EXPECT_EQ(mixed.at(Script::kLatin), 0.5);
  EXPECT_EQ(mixed.at(Script::kHangul), 0.25);
  EXPECT_EQ(mixed.at(Script::kHan), 0.25);
}

TEST(Vocab, TenTokenMixedFixture) {
  // classified by hand: Latin {▁the, ing, a한}, Hangul {▁고양이, 가, 한a글},
  // Han {猫, 中文}, Other {Привет, 123}
  Vocabulary v({"▁the", "ing", "a한", "▁고양이", "가", "한a글", "猫", "中文", "Привет", "123"});
  auto d = script_distribution(v);
  EXPECT_DOUBLE_EQ(d.at(Script::kLatin), 0.3);
  EXPECT_DOUBLE_EQ(d.at(Script::kHangul), 0.3);
  EXPECT_DOUBLE_EQ(d.at(Script::kHan), 0.2);
  EXPECT_DOUBLE_EQ(d.at(Script::kOther), 0.2);
  double total = 0;
  for (auto [s, f] : d) total += f;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Vocab, FilesRoundTrip) {
  forge_test::TempDir tmp;
  Vocabulary v({"a", "고양이", "猫"});
  write_vocab(v, tmp.file("v.txt"));
  EXPECT_EQ(read_vocab(tmp.file("v.txt")), v);
  text::write_file(tmp.file("nonl.txt"), "x\ny");
  EXPECT_EQ(read_vocab(tmp.file("nonl.txt")).size(), 2u);

  auto e = extend_embeddings(table(3, 2), 2, 1);
  write_embeddings(e, tmp.file("e.bin"));
  EXPECT_EQ(read_embeddings(tmp.file("e.bin")), e);
  auto bytes = text::read_file(tmp.file("e.bin"));
  EXPECT_EQ(bytes.size(), 8u + 5 * 2 * 4);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 5u);  // little-endian rows
  EXPECT_EQ(forge_test::kind_of([&] { deserialize_embeddings(bytes.substr(0, bytes.size() - 1)); }), ErrorKind::kParse);
}
