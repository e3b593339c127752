#pragma once

#include <array>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "forge/dataset.hpp"
#include "json.hpp"

namespace forge::stats {

// Word = ASCII-whitespace-delimited token (an eojeol for Korean).

struct PositionalFrequency {
  std::size_t max_position = 0;
  // positions[i] counts words at 1-based position i + 1.
  std::vector<std::map<std::string, std::size_t>> positions;
  std::size_t sentences = 0;  // non-empty texts seen

  void merge(const PositionalFrequency& other);
  nlohmann::json to_json() const;
  std::string to_csv() const;  // position,word,count

  friend bool operator==(const PositionalFrequency&, const PositionalFrequency&) = default;
};

PositionalFrequency positional_frequency(const std::vector<std::string>& texts, std::size_t max_position);

struct LengthDistribution {
  std::map<std::size_t, std::size_t> histogram;  // words -> texts
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  std::size_t max = 0;

  void merge(const LengthDistribution& other);
  void recompute_summary();
  nlohmann::json to_json() const;
  std::string to_csv() const;  // length,count

  friend bool operator==(const LengthDistribution&, const LengthDistribution&) = default;
};

LengthDistribution length_distribution(const std::vector<std::string>& texts);

enum class PosClass {
  kNoun,
  kVerb,
  kModifier,
  kIndependent,
  kRelational,
  kEnding,
  kAffix,
  kSymbols,
  kForeignLanguage,
};
inline constexpr std::size_t kPosClassCount = 9;

std::string_view to_string(PosClass c);
PosClass parse_pos_class(std::string_view s);

struct MorphToken {
  std::string surface;
  PosClass pos = PosClass::kNoun;
};

// Must be deterministic and safe to call concurrently.
class MorphAnalyzer {
 public:
  virtual ~MorphAnalyzer() = default;
  virtual std::vector<MorphToken> analyze(std::string_view text) const = 0;
};

// Dictionary lookup with a few script rules for unknown words:
//   leading/trailing punctuation -> Symbols, digits -> Symbols,
//   Latin or Han -> ForeignLanguage, unknown Hangul -> Noun, with a
//   Relational/Ending dictionary suffix split off when one matches.
class DictionaryAnalyzer final : public MorphAnalyzer {
 public:
  DictionaryAnalyzer() = default;
  explicit DictionaryAnalyzer(std::map<std::string, PosClass> dictionary);
  // TSV lines "surface<TAB>Class"; '#' starts a comment.
  static DictionaryAnalyzer from_tsv(const std::string& path);

  std::vector<MorphToken> analyze(std::string_view text) const override;

 private:
  std::map<std::string, PosClass> dict_;
  std::vector<std::pair<std::string, PosClass>> suffixes_;  // longest first
};

struct PosTally {
  std::array<std::size_t, kPosClassCount> occurrences{};
  std::array<std::set<std::string>, kPosClassCount> distinct{};

  void merge(const PosTally& other);
  friend bool operator==(const PosTally&, const PosTally&) = default;
};

struct PosRow {
  std::size_t duplicate_count = 0;  // token occurrences
  std::size_t unique_count = 0;     // distinct surfaces

  friend bool operator==(const PosRow&, const PosRow&) = default;
};

struct PosReport {
  std::array<PosRow, kPosClassCount> rows{};
  PosRow total;

  nlohmann::json to_json() const;
  std::string to_csv() const;
  friend bool operator==(const PosReport&, const PosReport&) = default;
};

PosReport make_report(const PosTally& tally);

PosTally pos_tally(const std::vector<std::string>& texts, const MorphAnalyzer& analyzer);
PosReport pos_report(const std::vector<std::string>& texts, const MorphAnalyzer& analyzer);

using TokenCounter = std::function<std::size_t(std::string_view)>;

std::size_t whitespace_token_count(std::string_view s);
std::size_t codepoint_token_count(std::string_view s);

struct BinnedHistogram {
  std::vector<double> edges;          // bins [edges[k], edges[k+1])
  std::vector<std::size_t> counts;    // edges.size() - 1 entries
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  friend bool operator==(const BinnedHistogram&, const BinnedHistogram&) = default;
};

struct PairedHistogram {
  BinnedHistogram a;
  BinnedHistogram b;

  nlohmann::json to_json() const;
  std::string to_csv() const;  // lo,hi,a,b
};

PairedHistogram token_length_histogram(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                       const TokenCounter& tokenizer, const std::vector<double>& edges);

// Serial reference kernels with the same contracts.
namespace serial {
PositionalFrequency positional_frequency(const std::vector<std::string>& texts, std::size_t max_position);
LengthDistribution length_distribution(const std::vector<std::string>& texts);
PosTally pos_tally(const std::vector<std::string>& texts, const MorphAnalyzer& analyzer);
PairedHistogram token_length_histogram(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                       const TokenCounter& tokenizer, const std::vector<double>& edges);
}  // namespace serial

enum class Field { kQuestion, kAnswer };
Field parse_field(std::string_view s);

// Every question or answer in `lang`, sample-major then turn order.
std::vector<std::string> extract_texts(const std::vector<dataset::Sample>& samples, Language lang, Field field);

}  // namespace forge::stats
