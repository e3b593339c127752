#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "forge/lossmath.hpp"
#include "forge/text.hpp"
#include "test_util.hpp"

using namespace forge;
using namespace forge::lossmath;

namespace {

// Distribution is an arbitrary (hashed) function of the whole prefix, so any
// prefix mistake in the code under test shows up in the value.
class PrefixHashModel final : public ProbModel {
 public:
  PrefixHashModel(std::size_t v, std::uint64_t salt) : v_(v), salt_(salt) {}
  std::size_t vocab_size() const override { return v_; }
  void next_distribution(std::span<const TokenId> prefix, std::span<double> out) const override {
    std::string key = std::to_string(salt_) + ":";
    for (auto t : prefix) key += std::to_string(t) + ",";
    std::uint64_t h = text::fnv1a64(key);
    double sum = 0;
    for (std::size_t i = 0; i < v_; ++i) {
      h = text::mix64(h + i);
      out[i] = 0.05 + static_cast<double>(h % 1000) / 1000.0;
      sum += out[i];
    }
    for (auto& p : out) p /= sum;
  }

 private:
  std::size_t v_;
  std::uint64_t salt_;
};

// Wraps a model and replaces the distribution for selected prefixes.
class PerturbedModel final : public ProbModel {
 public:
  PerturbedModel(const ProbModel& base, std::set<std::vector<TokenId>> targets, std::uint64_t seed)
      : base_(base), targets_(std::move(targets)), seed_(seed) {}
  std::size_t vocab_size() const override { return base_.vocab_size(); }
  void next_distribution(std::span<const TokenId> prefix, std::span<double> out) const override {
    std::vector<TokenId> p(prefix.begin(), prefix.end());
    if (!targets_.count(p)) return base_.next_distribution(prefix, out);
    PrefixHashModel(out.size(), seed_ + p.size()).next_distribution(prefix, out);
  }

 private:
  const ProbModel& base_;
  std::set<std::vector<TokenId>> targets_;
  std::uint64_t seed_;
};

// Independent oracle: -ln P of every scored token given the explicitly
// built prefix, summed naively.
double oracle_nll(const ProbModel& m, const std::vector<TokenId>& prefix, TokenId next) {
  std::vector<double> d(m.vocab_size());
  m.next_distribution(prefix, d);
  return -std::log(d[next]);
}

double oracle_pretrain(const ProbModel& m, const PretrainCorpus& c) {
  double total = 0;
  for (const auto& s : c.sequences) {
    for (std::size_t j = 0; j < s.tokens.size(); ++j) {
      total += oracle_nll(m, std::vector<TokenId>(s.tokens.begin(), s.tokens.begin() + j), s.tokens[j]);
    }
  }
  return total;
}

double oracle_vit(const ProbModel& m, const std::vector<ConversationSample>& samples) {
  double total = 0;
  for (const auto& s : samples) {
    for (std::size_t t = 0; t < s.turns.size(); ++t) {
      for (std::size_t j = 0; j < s.turns[t].answer.size(); ++j) {
        // {v, q1, a1, ..., qt, a_t,<j} rebuilt from scratch for every term
        std::vector<TokenId> prefix{s.image_token};
        for (std::size_t u = 0; u < t; ++u) {
          prefix.insert(prefix.end(), s.turns[u].question.begin(), s.turns[u].question.end());
          prefix.insert(prefix.end(), s.turns[u].answer.begin(), s.turns[u].answer.end());
        }
        prefix.insert(prefix.end(), s.turns[t].question.begin(), s.turns[t].question.end());
        prefix.insert(prefix.end(), s.turns[t].answer.begin(), s.turns[t].answer.begin() + j);
        total += oracle_nll(m, prefix, s.turns[t].answer[j]);
      }
    }
  }
  return total;
}

std::size_t total_length(const ConversationSample& s) {
  std::size_t n = 1;
  for (const auto& t : s.turns) n += t.question.size() + t.answer.size();
  return n;
}

// Random sample of total length <= 12 over a vocabulary of v.
ConversationSample random_sample(std::mt19937& rng, std::size_t v) {
  ConversationSample s;
  s.image_token = rng() % v;
  const int turns = 1 + rng() % 3;
  std::size_t budget = 11;
  for (int t = 0; t < turns && budget >= 1; ++t) {
    ConversationTurn turn;
    std::size_t q = rng() % std::min<std::size_t>(3, budget);
    for (std::size_t i = 0; i < q; ++i) turn.question.push_back(rng() % v);
    budget -= q;
    std::size_t a = 1 + rng() % std::min<std::size_t>(3, budget);
    for (std::size_t i = 0; i < a; ++i) turn.answer.push_back(rng() % v);
    budget -= a;
    s.turns.push_back(std::move(turn));
  }
  return s;
}

std::vector<double> random_distribution(std::mt19937& rng, std::size_t v) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> p(v);
  double sum = 0;
  for (auto& x : p) sum += (x = u(rng));
  for (auto& x : p) x /= sum;
  return p;
}

ContextTableModel random_table(std::mt19937& rng, std::size_t v) {
  ContextTableModel m(v, random_distribution(rng, v));
  for (int i = 0, n = rng() % 8; i < n; ++i) {
    std::vector<TokenId> ctx;
    for (int k = 0, len = 1 + rng() % 3; k < len; ++k) ctx.push_back(rng() % v);
    m.add_context(ctx, random_distribution(rng, v));
  }
  return m;
}

}  // namespace

TEST(Lossmath, UniformPretrainIsThreeLnFour) {
  UniformModel m(4);
  PretrainCorpus c{{{{0, 3, 2}}}};
  EXPECT_NEAR(pretrain_loss(m, c), 3 * std::log(4.0), 1e-9);
  EXPECT_NEAR(serial::pretrain_loss(m, c), 3 * std::log(4.0), 1e-9);
}

TEST(Lossmath, UniformVitIsTwoLnTwo) {
  UniformModel m(2);
  std::vector<ConversationSample> s{{1, {{{0, 1, 1}, {0, 1}}}}};
  EXPECT_NEAR(vit_loss(m, s), 2 * std::log(2.0), 1e-9);
}

TEST(Lossmath, PerfectModelIsZero) {
  // deterministic successor: next = (last + 1) mod 3, first token 0
  ContextTableModel m(3, {1, 0, 0});
  m.add_context({0}, {0, 1, 0});
  m.add_context({1}, {0, 0, 1});
  m.add_context({2}, {1, 0, 0});
  EXPECT_EQ(pretrain_loss(m, {{{{0, 1, 2, 0, 1}}}}), 0.0);
  // answers are predicted with certainty whatever the question holds
  std::vector<ConversationSample> s{{2, {{{}, {0, 1}}, {{1, 2}, {0}}}}};
  EXPECT_EQ(vit_loss(m, s), 0.0);
}

TEST(Lossmath, LookupTableMatchesTermByTerm) {
  ContextTableModel m(2, {0.5, 0.5});
  m.add_context({0}, {0.9, 0.1});
  m.add_context({1}, {0.3, 0.7});
  PretrainCorpus c{{{{0, 0, 1}}, {{1, 1}}}};
  const double expect = -(std::log(0.5) + std::log(0.9) + std::log(0.1)) - (std::log(0.5) + std::log(0.7));
  EXPECT_NEAR(pretrain_loss(m, c), expect, 1e-12);
  auto per = sequence_losses(m, c);
  ASSERT_EQ(per.size(), 2u);
  EXPECT_NEAR(per[0] + per[1], expect, 1e-12);
}

TEST(Lossmath, LongestContextWins) {
  ContextTableModel m(2, {0.5, 0.5});
  m.add_context({1}, {0.2, 0.8});
  m.add_context({0, 1}, {0.6, 0.4});
  std::vector<double> d(2);
  std::vector<TokenId> p{1, 0, 1};
  m.next_distribution(p, d);
  EXPECT_EQ(d[0], 0.6);
  p = {1, 1};
  m.next_distribution(p, d);
  EXPECT_EQ(d[0], 0.2);
}

TEST(Lossmath, TwoTurnsEqualTwoSingleTurnsWithConcatenatedPrefix) {
  PrefixHashModel m(4, 9);
  ConversationSample two{3, {{{1, 2}, {0, 3}}, {{2}, {1, 1, 0}}}};
  ConversationSample first{3, {{{1, 2}, {0, 3}}}};
  ConversationSample second{3, {{{1, 2, 0, 3, 2}, {1, 1, 0}}}};
  EXPECT_NEAR(vit_loss(m, {two}), vit_loss(m, {first}) + vit_loss(m, {second}), 1e-12);
}

TEST(Lossmath, SingleTurnEmptyQuestionReducesToPretrain) {
  PrefixHashModel m(4, 2);
  ConversationSample s{2, {{{}, {1, 3, 0}}}};
  PretrainCorpus c{{{{2, 1, 3, 0}}}};
  // the pretraining sum also scores v itself at the empty prefix
  EXPECT_NEAR(vit_loss(m, {s}), pretrain_loss(m, c) - oracle_nll(m, {}, 2), 1e-12);
}

TEST(Lossmath, OutOfVocabularyAndEmptyInputs) {
  UniformModel m(4);
  EXPECT_EQ(forge_test::kind_of([&] { pretrain_loss(m, {{{{0, 4}}}}); }), ErrorKind::kRange);
  EXPECT_EQ(forge_test::kind_of([&] { vit_loss(m, {{9, {{{}, {1}}}}}); }), ErrorKind::kRange);
  EXPECT_EQ(forge_test::kind_of([&] { pretrain_loss(m, {}); }), ErrorKind::kPrecondition);
  EXPECT_EQ(forge_test::kind_of([&] { vit_loss(m, {{0, {{{1}, {}}}}}); }), ErrorKind::kPrecondition);
  EXPECT_EQ(forge_test::kind_of([] { ContextTableModel(2, {0.5, 0.6}); }), ErrorKind::kContract);
}

TEST(Lossmath, JsonFixtures) {
  auto model = model_from_json(nlohmann::json::parse(
      R"({"type":"context_table","vocab_size":2,"fallback":[0.5,0.5],"contexts":[{"context":[0],"probs":[0.9,0.1]}]})"));
  auto corpus = corpus_from_json(nlohmann::json::parse(R"({"corpus":[[0,0]]})"));
  EXPECT_NEAR(pretrain_loss(*model, corpus), -std::log(0.5) - std::log(0.9), 1e-12);
  auto samples = samples_from_json(nlohmann::json::parse(
      R"({"samples":[{"image_token":1,"turns":[{"question":[0],"answer":[1,0]}]}]})"));
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].turns[0].answer, (std::vector<TokenId>{1, 0}));
  EXPECT_EQ(forge_test::kind_of([] { model_from_json({{"type", "neural"}}); }), ErrorKind::kParse);
}

TEST(Lossmath, StageDatasets) {
  ConversationSample one{0, {{{1}, {2}}}};
  ConversationSample three{0, {{{1}, {2}}, {{1}, {2}}, {{1}, {2}}}};
  auto [s1, s2] = stage_datasets({{"cap_en", {one, one}}, {"cap_ko", {one}}},
                                 {{"vif_en", {three}}, {"vif_ko", {one, three}}, {"ours", {three, three, one}}});
  EXPECT_EQ(s1.sources.size(), 2u);
  EXPECT_EQ(s1.total_samples, 3u);
  EXPECT_EQ(s2.sources.size(), 3u);
  EXPECT_EQ(s2.total_samples, 6u);
  EXPECT_EQ(s2.max_turns, 3u);
  EXPECT_EQ(forge_test::kind_of([&] { stage_datasets({{"cap", {three}}}, {}); }), ErrorKind::kContract);
}

TEST(Lossmath, CompensatedSumKeepsSmallTerms) {
  CompensatedSum s;
  s.add(1e16);
  for (int i = 0; i < 1000; ++i) s.add(1.0);
  s.add(-1e16);
  EXPECT_EQ(s.value(), 1000.0);
}

// ---- properties ------------------------------------------------------------

TEST(LossmathProperty, MultiTurnMatchesBruteForcePrefixOracle) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t v = 2 + rng() % 3;
    auto s = random_sample(rng, v);
    ASSERT_LE(total_length(s), 12u);
    PrefixHashModel hashed(v, trial);
    auto table = random_table(rng, v);
    for (const ProbModel* m : {static_cast<const ProbModel*>(&hashed), static_cast<const ProbModel*>(&table)}) {
      EXPECT_NEAR(vit_loss(*m, {s}), oracle_vit(*m, {s}), 1e-9);
      EXPECT_NEAR(serial::vit_loss(*m, {s}), oracle_vit(*m, {s}), 1e-9);
    }
  }
}

TEST(LossmathProperty, PerturbingQuestionPositionsChangesNothing) {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t v = 2 + rng() % 3;
    auto s = random_sample(rng, v);
    PrefixHashModel base(v, trial);
    // prefixes at which the next token is the image or a question token
    std::set<std::vector<TokenId>> question_positions{{}};
    std::vector<TokenId> ctx{s.image_token};
    for (const auto& t : s.turns) {
      for (auto q : t.question) {
        question_positions.insert(ctx);
        ctx.push_back(q);
      }
      ctx.insert(ctx.end(), t.answer.begin(), t.answer.end());
    }
    PerturbedModel perturbed(base, question_positions, 1000 + trial);
    EXPECT_EQ(vit_loss(perturbed, {s}) - vit_loss(base, {s}), 0.0);
  }
}

TEST(LossmathProperty, AdditivePermutationInvariantAndSerialEqual) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t v = 2 + rng() % 3;
    PrefixHashModel m(v, trial);
    PretrainCorpus c;
    std::vector<ConversationSample> samples;
    for (int i = 0, n = 1 + rng() % 40; i < n; ++i) {
      TokenSequence seq;
      for (int k = 0, len = 1 + rng() % 10; k < len; ++k) seq.tokens.push_back(rng() % v);
      c.sequences.push_back(seq);
      samples.push_back(random_sample(rng, v));
    }
    const double whole = pretrain_loss(m, c);
    EXPECT_NEAR(whole, oracle_pretrain(m, c), 1e-9);
    EXPECT_EQ(whole, serial::pretrain_loss(m, c));
    double parts = 0;
    for (double x : sequence_losses(m, c)) parts += x;
    EXPECT_NEAR(whole, parts, 1e-9);
    auto shuffled = c;
    std::shuffle(shuffled.sequences.begin(), shuffled.sequences.end(), rng);
    EXPECT_NEAR(pretrain_loss(m, shuffled), whole, 1e-9);

    const double vit = vit_loss(m, samples);
    EXPECT_EQ(vit, serial::vit_loss(m, samples));
    double vparts = 0;
    for (double x : sample_losses(m, samples)) vparts += x;
    EXPECT_NEAR(vit, vparts, 1e-9);
  }
}
