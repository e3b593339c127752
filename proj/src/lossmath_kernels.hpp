#pragma once

// Per-item kernels shared by the OpenMP and serial loss paths.
#include <span>
#include <vector>

#include "forge/lossmath.hpp"

namespace forge::lossmath::detail {

void validate_corpus(const ProbModel& model, const PretrainCorpus& corpus);
void validate_samples(const ProbModel& model, const std::vector<ConversationSample>& samples);
double one_sequence(const ProbModel& model, const std::vector<TokenId>& tokens, std::vector<double>& buf);
double one_sample(const ProbModel& model, const ConversationSample& sample, std::vector<TokenId>& context,
                  std::vector<double>& buf);

}  // namespace forge::lossmath::detail
