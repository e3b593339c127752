#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace forge::vocab {

// Ordered token list; a token's id is its index.
class Vocabulary {
 public:
  Vocabulary() = default;
  // Throws kConflict on a repeated token.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::optional<std::size_t> id(std::string_view token) const;
  bool contains(std::string_view token) const { return id(token).has_value(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  friend std::pair<Vocabulary, struct ExpansionReport> merge_vocab(const Vocabulary&,
                                                                   const std::vector<std::string>&);
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ExpansionReport {
  std::size_t base_size = 0;
  std::size_t added_requested = 0;
  std::size_t added_effective = 0;
  std::size_t final_size = 0;
  // Every skipped addition, in input order: tokens already in the base plus
  // repeats within the additions themselves.
  std::vector<std::string> overlap;
  std::size_t overlap_with_base = 0;
  std::size_t repeated_in_additions = 0;

  nlohmann::json to_json() const;
};

// Base ids are untouched; new tokens are appended in the given order.
std::pair<Vocabulary, ExpansionReport> merge_vocab(const Vocabulary& base,
                                                   const std::vector<std::string>& additions);

inline constexpr double kDefaultInitStddev = 0.02;

struct EmbeddingTable {
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;  // row-major rows x dim

  float at(std::size_t r, std::size_t c) const { return values[r * dim + c]; }
  void validate() const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

// Appends new_count rows drawn from normal(0, stddev) with a mt19937_64
// seeded by `seed`. Existing rows are copied bit-for-bit.
EmbeddingTable extend_embeddings(const EmbeddingTable& table, std::int64_t new_count,
                                 std::uint64_t seed, double stddev = kDefaultInitStddev);

enum class Script { kLatin, kHangul, kHan, kOther };
std::string_view to_string(Script s);

Script classify_token(std::string_view token);

// Fraction of tokens per script class; every class is present (possibly 0).
std::map<Script, double> script_distribution(const Vocabulary& v);

// One token per line, UTF-8. A trailing newline is optional.
Vocabulary read_vocab(const std::string& path);
std::vector<std::string> read_token_list(const std::string& path);
void write_vocab(const Vocabulary& v, const std::string& path);

// Header: rows (u32 LE), dim (u32 LE); then rows*dim float32 LE.
std::string serialize_embeddings(const EmbeddingTable& t);
EmbeddingTable deserialize_embeddings(std::string_view bytes);
EmbeddingTable read_embeddings(const std::string& path);
void write_embeddings(const EmbeddingTable& t, const std::string& path);

}  // namespace forge::vocab
