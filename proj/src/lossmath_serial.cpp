// Serial reference kernels for lossmath; kept for testing and benchmarking
// against the OpenMP path.
#include <span>

#include "forge/lossmath.hpp"
#include "lossmath_kernels.hpp"

namespace forge::lossmath {

namespace serial {

double pretrain_loss(const ProbModel& model, const PretrainCorpus& corpus) {
  detail::validate_corpus(model, corpus);
  std::vector<double> buf;
  CompensatedSum total;
  for (const auto& s : corpus.sequences) total.add(detail::one_sequence(model, s.tokens, buf));
  return total.value();
}

double vit_loss(const ProbModel& model, const std::vector<ConversationSample>& samples) {
  detail::validate_samples(model, samples);
  std::vector<double> buf;
  std::vector<TokenId> context;
  CompensatedSum total;
  for (const auto& s : samples) total.add(detail::one_sample(model, s, context, buf));
  return total.value();
}

}  // namespace serial
}  // namespace forge::lossmath
