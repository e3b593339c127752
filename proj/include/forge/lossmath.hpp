#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace forge::lossmath {

using TokenId = std::uint32_t;

struct TokenSequence {
  std::vector<TokenId> tokens;
};

struct PretrainCorpus {
  std::vector<TokenSequence> sequences;
};

struct ConversationTurn {
  std::vector<TokenId> question;
  std::vector<TokenId> answer;
};

// The image is a single opaque conditioning token.
struct ConversationSample {
  TokenId image_token = 0;
  std::vector<ConversationTurn> turns;
};

// Next-token distribution over a vocabulary of vocab_size() ids.
class ProbModel {
 public:
  virtual ~ProbModel() = default;
  virtual std::size_t vocab_size() const = 0;
  // `out` has vocab_size() entries; must sum to 1.
  virtual void next_distribution(std::span<const TokenId> prefix, std::span<double> out) const = 0;
};

class UniformModel final : public ProbModel {
 public:
  explicit UniformModel(std::size_t vocab_size);
  std::size_t vocab_size() const override { return vocab_size_; }
  void next_distribution(std::span<const TokenId> prefix, std::span<double> out) const override;

 private:
  std::size_t vocab_size_;
};

// Distribution chosen by the longest listed context that is a suffix of the
// prefix; `fallback` when none matches. A bigram table is the special case of
// one-token contexts.
class ContextTableModel final : public ProbModel {
 public:
  ContextTableModel(std::size_t vocab_size, std::vector<double> fallback);
  void add_context(std::vector<TokenId> context, std::vector<double> probs);

  std::size_t vocab_size() const override { return vocab_size_; }
  void next_distribution(std::span<const TokenId> prefix, std::span<double> out) const override;

 private:
  std::size_t vocab_size_;
  std::size_t longest_ = 0;
  std::vector<double> fallback_;
  std::map<std::vector<TokenId>, std::vector<double>> contexts_;
};

// {"type": "uniform", "vocab_size": V}
// {"type": "context_table", "vocab_size": V, "fallback": [...],
//  "contexts": [{"context": [ids], "probs": [...]}, ...]}
std::unique_ptr<ProbModel> model_from_json(const nlohmann::json& j);

// Throws kContract unless `probs` is a distribution over vocab_size entries.
void check_distribution(std::span<const double> probs, std::size_t vocab_size);

PretrainCorpus corpus_from_json(const nlohmann::json& j);          // {"corpus": [[ids], ...]}
std::vector<ConversationSample> samples_from_json(const nlohmann::json& j);  // {"samples": [...]}

// Causal LM loss: -sum_i sum_j ln P(x_ij | x_i,<j). Parallel over sequences,
// reduced in index order with compensated summation.
double pretrain_loss(const ProbModel& model, const PretrainCorpus& corpus);

// Visual instruction tuning loss: only answer tokens are scored; the prefix
// for answer token j of turn t is {v, q1, a1, ..., qt, a_t,<j}.
double vit_loss(const ProbModel& model, const std::vector<ConversationSample>& samples);

// Per-item losses, in input order.
std::vector<double> sequence_losses(const ProbModel& model, const PretrainCorpus& corpus);
std::vector<double> sample_losses(const ProbModel& model, const std::vector<ConversationSample>& samples);

// Serial reference kernels; same contract, no threading.
namespace serial {
double pretrain_loss(const ProbModel& model, const PretrainCorpus& corpus);
double vit_loss(const ProbModel& model, const std::vector<ConversationSample>& samples);
}  // namespace serial

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct SourceSet {
  std::string name;
  std::vector<ConversationSample> samples;
};

struct StageDescriptor {
  int stage = 1;
  std::vector<std::pair<std::string, std::size_t>> sources;  // name, sample count
  std::size_t total_samples = 0;
  std::size_t total_turns = 0;
  std::size_t max_turns = 0;

  nlohmann::json to_json() const;
};

// Stage 1 takes caption data and requires every sample to be single-turn;
// stage 2 takes instruction-following data of any turn count.
std::pair<StageDescriptor, StageDescriptor> stage_datasets(const std::vector<SourceSet>& caption_sets,
                                                           const std::vector<SourceSet>& vif_sets);

}  // namespace forge::lossmath
