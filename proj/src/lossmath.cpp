#include "forge/lossmath.hpp"

#include <cmath>
#include <exception>

#include <omp.h>

#include "forge/error.hpp"
#include "lossmath_kernels.hpp"

namespace forge::lossmath {

using nlohmann::json;

void CompensatedSum::add(double x) {
  double t = sum_ + x;
  if (std::fabs(sum_) >= std::fabs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

void check_distribution(std::span<const double> probs, std::size_t vocab_size) {
  if (probs.size() != vocab_size) {
    throw Error(ErrorKind::kContract, "distribution has " + std::to_string(probs.size()) +
                                          " entries, vocabulary has " + std::to_string(vocab_size));
  }
  CompensatedSum s;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0) throw Error(ErrorKind::kContract, "probability outside [0, 1]");
    s.add(p);
  }
  if (std::fabs(s.value() - 1.0) > 1e-9) {
    throw Error(ErrorKind::kContract, "distribution sums to " + std::to_string(s.value()));
  }
}

UniformModel::UniformModel(std::size_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size == 0) throw Error(ErrorKind::kContract, "vocabulary size must be >= 1");
}

void UniformModel::next_distribution(std::span<const TokenId>, std::span<double> out) const {
  const double p = 1.0 / static_cast<double>(vocab_size_);
  for (double& x : out) x = p;
}

ContextTableModel::ContextTableModel(std::size_t vocab_size, std::vector<double> fallback)
    : vocab_size_(vocab_size), fallback_(std::move(fallback)) {
  if (vocab_size == 0) throw Error(ErrorKind::kContract, "vocabulary size must be >= 1");
  check_distribution(fallback_, vocab_size_);
}

void ContextTableModel::add_context(std::vector<TokenId> context, std::vector<double> probs) {
  check_distribution(probs, vocab_size_);
  for (TokenId t : context) {
    if (t >= vocab_size_) throw Error(ErrorKind::kRange, "context token " + std::to_string(t) + " >= vocabulary size");
  }
  longest_ = std::max(longest_, context.size());
  contexts_[std::move(context)] = std::move(probs);
}

void ContextTableModel::next_distribution(std::span<const TokenId> prefix, std::span<double> out) const {
  const std::size_t max_len = std::min(longest_, prefix.size());
  for (std::size_t len = max_len + 1; len-- > 0;) {
    std::vector<TokenId> key(prefix.end() - static_cast<std::ptrdiff_t>(len), prefix.end());
    if (auto it = contexts_.find(key); it != contexts_.end()) {
      std::copy(it->second.begin(), it->second.end(), out.begin());
      return;
    }
  }
  std::copy(fallback_.begin(), fallback_.end(), out.begin());
}

std::unique_ptr<ProbModel> model_from_json(const json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    const auto v = j.at("vocab_size").get<std::size_t>();
    if (type == "uniform") return std::make_unique<UniformModel>(v);
    if (type == "context_table") {
      auto fallback = j.contains("fallback") ? j["fallback"].get<std::vector<double>>()
                                             : std::vector<double>(v, 1.0 / static_cast<double>(v));
      auto m = std::make_unique<ContextTableModel>(v, std::move(fallback));
      for (const auto& c : j.value("contexts", json::array())) {
        m->add_context(c.at("context").get<std::vector<TokenId>>(), c.at("probs").get<std::vector<double>>());
      }
      return m;
    }
    throw Error(ErrorKind::kParse, "unknown model type '" + type + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad model description: ") + e.what());
  }
}

PretrainCorpus corpus_from_json(const json& j) {
  try {
    PretrainCorpus c;
    for (const auto& seq : j.at("corpus")) c.sequences.push_back({seq.get<std::vector<TokenId>>()});
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad corpus: ") + e.what());
  }
}

std::vector<ConversationSample> samples_from_json(const json& j) {
  try {
    std::vector<ConversationSample> out;
    for (const auto& sj : j.at("samples")) {
      ConversationSample s;
      s.image_token = sj.at("image_token").get<TokenId>();
      for (const auto& tj : sj.at("turns")) {
        s.turns.push_back({tj.value("question", std::vector<TokenId>{}), tj.at("answer").get<std::vector<TokenId>>()});
      }
      out.push_back(std::move(s));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad samples: ") + e.what());
  }
}

namespace detail {

void check_tokens(std::span<const TokenId> tokens, std::size_t vocab, const char* what) {
  for (TokenId t : tokens) {
    if (t >= vocab) {
      throw Error(ErrorKind::kRange, std::string(what) + " token id " + std::to_string(t) +
                                         " >= vocabulary size " + std::to_string(vocab),
                  {{"token", t}, {"vocab_size", vocab}});
    }
  }
}

void validate_corpus(const ProbModel& model, const PretrainCorpus& corpus) {
  if (corpus.sequences.empty()) throw Error(ErrorKind::kPrecondition, "pretraining corpus is empty");
  for (const auto& s : corpus.sequences) {
    if (s.tokens.empty()) throw Error(ErrorKind::kPrecondition, "empty sequence in corpus");
    check_tokens(s.tokens, model.vocab_size(), "sequence");
  }
}

void validate_samples(const ProbModel& model, const std::vector<ConversationSample>& samples) {
  for (const auto& s : samples) {
    if (s.turns.empty()) throw Error(ErrorKind::kPrecondition, "conversation sample without turns");
    check_tokens(std::span<const TokenId>(&s.image_token, 1), model.vocab_size(), "image");
    for (const auto& t : s.turns) {
      if (t.answer.empty()) throw Error(ErrorKind::kPrecondition, "conversation turn with empty answer");
      check_tokens(t.question, model.vocab_size(), "question");
      check_tokens(t.answer, model.vocab_size(), "answer");
    }
  }
}

double token_nll(const ProbModel& model, std::span<const TokenId> prefix, TokenId next, std::vector<double>& buf) {
  buf.assign(model.vocab_size(), 0.0);
  model.next_distribution(prefix, buf);
  check_distribution(buf, model.vocab_size());
  return -std::log(buf[next]);
}

double one_sequence(const ProbModel& model, const std::vector<TokenId>& tokens, std::vector<double>& buf) {
  CompensatedSum s;
  std::span<const TokenId> all(tokens);
  for (std::size_t j = 0; j < tokens.size(); ++j) s.add(token_nll(model, all.first(j), tokens[j], buf));
  return s.value();
}

double one_sample(const ProbModel& model, const ConversationSample& sample, std::vector<TokenId>& context,
                  std::vector<double>& buf) {
  CompensatedSum s;
  context.clear();
  context.push_back(sample.image_token);
  for (const auto& turn : sample.turns) {
    context.insert(context.end(), turn.question.begin(), turn.question.end());
    for (TokenId a : turn.answer) {
      s.add(token_nll(model, context, a, buf));
      context.push_back(a);
    }
  }
  return s.value();
}

}  // namespace detail

namespace {

template <typename Item, typename Fn>
std::vector<double> parallel_map(const std::vector<Item>& items, Fn fn) {
  std::vector<double> out(items.size(), 0.0);
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(items.size());
#pragma omp parallel
  {
    std::vector<double> buf;
    std::vector<TokenId> scratch;
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        out[static_cast<std::size_t>(i)] = fn(items[static_cast<std::size_t>(i)], buf, scratch);
      } catch (...) {
#pragma omp critical(forge_loss_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

double ordered_sum(const std::vector<double>& xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

}  // namespace

std::vector<double> sequence_losses(const ProbModel& model, const PretrainCorpus& corpus) {
  detail::validate_corpus(model, corpus);
  return parallel_map(corpus.sequences, [&](const TokenSequence& s, std::vector<double>& buf, std::vector<TokenId>&) {
    return detail::one_sequence(model, s.tokens, buf);
  });
}

std::vector<double> sample_losses(const ProbModel& model, const std::vector<ConversationSample>& samples) {
  detail::validate_samples(model, samples);
  return parallel_map(samples, [&](const ConversationSample& s, std::vector<double>& buf, std::vector<TokenId>& ctx) {
    return detail::one_sample(model, s, ctx, buf);
  });
}

double pretrain_loss(const ProbModel& model, const PretrainCorpus& corpus) {
  return ordered_sum(sequence_losses(model, corpus));
}

double vit_loss(const ProbModel& model, const std::vector<ConversationSample>& samples) {
  return ordered_sum(sample_losses(model, samples));
}

json StageDescriptor::to_json() const {
  json src = json::array();
  for (const auto& [name, n] : sources) src.push_back({{"name", name}, {"samples", n}});
  return {{"stage", stage},
          {"sources", std::move(src)},
          {"total_samples", total_samples},
          {"total_turns", total_turns},
          {"max_turns", max_turns}};
}

std::pair<StageDescriptor, StageDescriptor> stage_datasets(const std::vector<SourceSet>& caption_sets,
                                                           const std::vector<SourceSet>& vif_sets) {
  auto describe = [](int stage, const std::vector<SourceSet>& sets) {
    StageDescriptor d;
    d.stage = stage;
    for (const auto& set : sets) {
      d.sources.emplace_back(set.name, set.samples.size());
      d.total_samples += set.samples.size();
      for (const auto& s : set.samples) {
        if (stage == 1 && s.turns.size() != 1) {
          throw Error(ErrorKind::kContract,
                      "stage-1 source '" + set.name + "' contains a sample with " + std::to_string(s.turns.size()) +
                          " turns; stage 1 is single-turn",
                      {{"source", set.name}, {"turns", s.turns.size()}});
        }
        d.total_turns += s.turns.size();
        d.max_turns = std::max(d.max_turns, s.turns.size());
      }
    }
    return d;
  };
  return {describe(1, caption_sets), describe(2, vif_sets)};
}

}  // namespace forge::lossmath
