// Serial reference kernels for statistics; kept for testing and
// benchmarking against the OpenMP path.
#include "forge/error.hpp"
#include "forge/stats.hpp"
#include "stats_kernels.hpp"

namespace forge::stats::serial {

PositionalFrequency positional_frequency(const std::vector<std::string>& texts, std::size_t max_position) {
  if (max_position < 1) throw Error(ErrorKind::kContract, "max_position must be >= 1");
  PositionalFrequency out;
  out.max_position = max_position;
  for (const auto& t : texts) detail::count_positions(t, out);
  return out;
}

LengthDistribution length_distribution(const std::vector<std::string>& texts) {
  LengthDistribution out;
  for (const auto& t : texts) detail::count_length(t, out);
  out.recompute_summary();
  return out;
}

PosTally pos_tally(const std::vector<std::string>& texts, const MorphAnalyzer& analyzer) {
  PosTally out;
  for (std::size_t i = 0; i < texts.size(); ++i) detail::tally_text(texts[i], i, analyzer, out);
  return out;
}

PairedHistogram token_length_histogram(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                       const TokenCounter& tokenizer, const std::vector<double>& edges) {
  detail::check_edges(edges);
  PairedHistogram out{detail::empty_histogram(edges), detail::empty_histogram(edges)};
  for (const auto& t : a) detail::bin_value(static_cast<double>(tokenizer(t)), out.a);
  for (const auto& t : b) detail::bin_value(static_cast<double>(tokenizer(t)), out.b);
  return out;
}

}  // namespace forge::stats::serial
