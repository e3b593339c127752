#include "forge/vocab.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::vocab {

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size());
  index_.reserve(tokens.size());
  for (auto& t : tokens) {
    if (index_.contains(t)) {
      throw Error(ErrorKind::kConflict, "duplicate token '" + t + "' at id " + std::to_string(tokens_.size()),
                  {{"token", t}, {"id", tokens_.size()}});
    }
    push(std::move(t));
  }
}

void Vocabulary::push(std::string token) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

std::optional<std::size_t> Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json ExpansionReport::to_json() const {
  return {{"base_size", base_size},
          {"added_requested", added_requested},
          {"added_effective", added_effective},
          {"final_size", final_size},
          {"overlap", overlap},
          {"overlap_with_base", overlap_with_base},
          {"repeated_in_additions", repeated_in_additions}};
}

std::pair<Vocabulary, ExpansionReport> merge_vocab(const Vocabulary& base,
                                                   const std::vector<std::string>& additions) {
  Vocabulary merged = base;
  ExpansionReport r;
  r.base_size = base.size();
  r.added_requested = additions.size();
  for (const auto& t : additions) {
    if (base.contains(t)) {
      r.overlap.push_back(t);
      ++r.overlap_with_base;
    } else if (merged.contains(t)) {
      r.overlap.push_back(t);
      ++r.repeated_in_additions;
    } else {
      merged.push(t);
    }
  }
  r.final_size = merged.size();
  r.added_effective = r.final_size - r.base_size;
  return {std::move(merged), std::move(r)};
}

void EmbeddingTable::validate() const {
  if (values.size() != static_cast<std::size_t>(rows) * dim) {
    throw Error(ErrorKind::kContract, "embedding table holds " + std::to_string(values.size()) +
                                          " values for " + std::to_string(rows) + "x" + std::to_string(dim));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kContract, "embedding table contains a non-finite value");
  }
}

EmbeddingTable extend_embeddings(const EmbeddingTable& table, std::int64_t new_count, std::uint64_t seed,
                                 double stddev) {
  table.validate();
  if (new_count < 0) throw Error(ErrorKind::kRange, "new_count must be >= 0, got " + std::to_string(new_count));
  if (!(stddev > 0) || !std::isfinite(stddev)) throw Error(ErrorKind::kRange, "init stddev must be positive");
  const std::uint64_t total = static_cast<std::uint64_t>(table.rows) + static_cast<std::uint64_t>(new_count);
  if (total > UINT32_MAX) throw Error(ErrorKind::kRange, "row count overflows the 32-bit header");

  EmbeddingTable out;
  out.rows = static_cast<std::uint32_t>(total);
  out.dim = table.dim;
  out.values.reserve(static_cast<std::size_t>(out.rows) * out.dim);
  out.values = table.values;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  const std::size_t fresh = static_cast<std::size_t>(new_count) * table.dim;
  for (std::size_t i = 0; i < fresh; ++i) out.values.push_back(static_cast<float>(dist(rng)));
  return out;
}

std::string_view to_string(Script s) {
  switch (s) {
    case Script::kLatin: return "Latin";
    case Script::kHangul: return "Hangul";
    case Script::kHan: return "Han";
    case Script::kOther: return "Other";
  }
  return "?";
}

namespace {

bool in(char32_t c, char32_t lo, char32_t hi) { return c >= lo && c <= hi; }

bool is_latin_letter(char32_t c) {
  return in(c, 'A', 'Z') || in(c, 'a', 'z') || c == 0xAA || c == 0xBA || in(c, 0xC0, 0xD6) ||
         in(c, 0xD8, 0xF6) || in(c, 0xF8, 0x24F) || in(c, 0x1E00, 0x1EFF) || in(c, 0xFF21, 0xFF3A) ||
         in(c, 0xFF41, 0xFF5A);
}

bool is_hangul(char32_t c) {
  return in(c, 0xAC00, 0xD7A3) || in(c, 0x1100, 0x11FF) || in(c, 0x3130, 0x318F) ||
         in(c, 0xA960, 0xA97F) || in(c, 0xD7B0, 0xD7FF);
}

bool is_han(char32_t c) {
  return in(c, 0x4E00, 0x9FFF) || in(c, 0x3400, 0x4DBF) || in(c, 0xF900, 0xFAFF) ||
         in(c, 0x20000, 0x2A6DF) || in(c, 0x2A700, 0x2EBEF) || in(c, 0x30000, 0x3134F);
}

// Letters of scripts we do not track (Greek, Cyrillic, kana, ...). Digits,
// punctuation, symbols and the SentencePiece marker U+2581 are not letters.
bool is_other_letter(char32_t c) {
  return in(c, 0x370, 0x3FF) || in(c, 0x400, 0x52F) || in(c, 0x530, 0x58F) || in(c, 0x5D0, 0x5EA) ||
         in(c, 0x620, 0x64A) || in(c, 0x900, 0x97F) || in(c, 0xE01, 0xE30) || in(c, 0x3041, 0x3096) ||
         in(c, 0x30A1, 0x30FA);
}

}  // namespace

Script classify_token(std::string_view token) {
  std::size_t latin = 0, hangul = 0, han = 0, other = 0;
  for (char32_t c : text::decode_utf8(token)) {
    if (is_latin_letter(c)) ++latin;
    else if (is_hangul(c)) ++hangul;
    else if (is_han(c)) ++han;
    else if (is_other_letter(c)) ++other;
  }
  // Ties resolve in Latin, Hangul, Han, Other order.
  std::size_t best = std::max({latin, hangul, han, other});
  if (best == 0) return Script::kOther;
  if (latin == best) return Script::kLatin;
  if (hangul == best) return Script::kHangul;
  if (han == best) return Script::kHan;
  return Script::kOther;
}

std::map<Script, double> script_distribution(const Vocabulary& v) {
  std::map<Script, std::size_t> counts = {
      {Script::kLatin, 0}, {Script::kHangul, 0}, {Script::kHan, 0}, {Script::kOther, 0}};
  for (const auto& t : v.tokens()) ++counts[classify_token(t)];
  std::map<Script, double> out;
  for (auto [s, n] : counts) {
    out[s] = v.size() == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(v.size());
  }
  return out;
}

std::vector<std::string> read_token_list(const std::string& path) {
  std::string data = text::read_file(path);
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) eol = data.size();
    std::string tok = data.substr(pos, eol - pos);
    if (!tok.empty() && tok.back() == '\r') tok.pop_back();
    out.push_back(std::move(tok));
    pos = eol + 1;
  }
  return out;
}

Vocabulary read_vocab(const std::string& path) { return Vocabulary(read_token_list(path)); }

void write_vocab(const Vocabulary& v, const std::string& path) {
  std::string out;
  for (const auto& t : v.tokens()) {
    out += t;
    out += '\n';
  }
  text::write_file(path, out);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(std::string_view b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + i])) << (8 * i);
  return v;
}

}  // namespace

std::string serialize_embeddings(const EmbeddingTable& t) {
  t.validate();
  std::string out;
  out.reserve(8 + t.values.size() * 4);
  put_u32(out, t.rows);
  put_u32(out, t.dim);
  for (float f : t.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

EmbeddingTable deserialize_embeddings(std::string_view bytes) {
  if (bytes.size() < 8) throw Error(ErrorKind::kParse, "embedding file shorter than its 8-byte header");
  EmbeddingTable t;
  t.rows = get_u32(bytes, 0);
  t.dim = get_u32(bytes, 4);
  const std::size_t n = static_cast<std::size_t>(t.rows) * t.dim;
  if (bytes.size() != 8 + n * 4) {
    throw Error(ErrorKind::kParse, "embedding file size " + std::to_string(bytes.size()) + " does not match " +
                                       std::to_string(t.rows) + "x" + std::to_string(t.dim) + " header");
  }
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.values[i] = std::bit_cast<float>(get_u32(bytes, 8 + 4 * i));
  t.validate();
  return t;
}

EmbeddingTable read_embeddings(const std::string& path) { return deserialize_embeddings(text::read_file(path)); }

void write_embeddings(const EmbeddingTable& t, const std::string& path) {
  text::write_file(path, serialize_embeddings(t));
}

}  // namespace forge::vocab
