#pragma once

// Per-text kernels shared by the OpenMP and serial statistics paths.
#include <string>
#include <vector>

#include "forge/stats.hpp"

namespace forge::stats::detail {

void count_positions(std::string_view text, PositionalFrequency& into);
void count_length(std::string_view text, LengthDistribution& into);
// Throws kFormat naming `index` when the analyzer fails.
void tally_text(std::string_view text, std::size_t index, const MorphAnalyzer& analyzer, PosTally& into);
void check_edges(const std::vector<double>& edges);
BinnedHistogram empty_histogram(const std::vector<double>& edges);
void bin_value(double v, BinnedHistogram& h);

}  // namespace forge::stats::detail
