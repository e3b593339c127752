#include "forge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include <omp.h>

#include "forge/error.hpp"
#include "forge/text.hpp"
#include "stats_kernels.hpp"

namespace forge::stats {

using nlohmann::json;

// ---- merge / summaries -----------------------------------------------------

void PositionalFrequency::merge(const PositionalFrequency& other) {
  if (other.max_position != max_position) {
    throw Error(ErrorKind::kContract, "cannot merge positional frequencies with different max_position");
  }
  for (std::size_t i = 0; i < other.positions.size(); ++i) {
    if (positions.size() <= i) positions.resize(i + 1);
    for (const auto& [w, n] : other.positions[i]) positions[i][w] += n;
  }
  sentences += other.sentences;
}

json PositionalFrequency::to_json() const {
  json pos = json::array();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    pos.push_back({{"position", i + 1}, {"counts", positions[i]}});
  }
  return {{"max_position", max_position}, {"sentences", sentences}, {"positions", std::move(pos)}};
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(15);
  os << v;
  return os.str();
}

}  // namespace

std::string PositionalFrequency::to_csv() const {
  std::string out = "position,word,count\n";
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (const auto& [w, n] : positions[i]) {
      out += std::to_string(i + 1) + "," + csv_field(w) + "," + std::to_string(n) + "\n";
    }
  }
  return out;
}

void LengthDistribution::merge(const LengthDistribution& other) {
  for (auto [len, n] : other.histogram) histogram[len] += n;
  recompute_summary();
}

void LengthDistribution::recompute_summary() {
  count = 0;
  double sum = 0;
  for (auto [len, n] : histogram) {
    count += n;
    sum += static_cast<double>(len) * static_cast<double>(n);
  }
  max = histogram.empty() ? 0 : histogram.rbegin()->first;
  mean = count ? sum / static_cast<double>(count) : 0.0;
  if (count == 0) {
    median = 0.0;
    return;
  }
  // values at 0-based ranks lo and hi of the sorted lengths
  const std::size_t lo = (count - 1) / 2, hi = count / 2;
  std::size_t seen = 0;
  double lo_v = 0, hi_v = 0;
  bool have_lo = false;
  for (auto [len, n] : histogram) {
    if (!have_lo && lo < seen + n) {
      lo_v = static_cast<double>(len);
      have_lo = true;
    }
    if (hi < seen + n) {
      hi_v = static_cast<double>(len);
      break;
    }
    seen += n;
  }
  median = (lo_v + hi_v) / 2.0;
}

json LengthDistribution::to_json() const {
  json h = json::object();
  for (auto [len, n] : histogram) h[std::to_string(len)] = n;
  return {{"histogram", std::move(h)}, {"count", count}, {"mean", mean}, {"median", median}, {"max", max}};
}

std::string LengthDistribution::to_csv() const {
  std::string out = "length,count\n";
  for (auto [len, n] : histogram) out += std::to_string(len) + "," + std::to_string(n) + "\n";
  return out;
}

std::string_view to_string(PosClass c) {
  switch (c) {
    case PosClass::kNoun: return "Noun";
    case PosClass::kVerb: return "Verb";
    case PosClass::kModifier: return "Modifier";
    case PosClass::kIndependent: return "Independent";
    case PosClass::kRelational: return "Relational";
    case PosClass::kEnding: return "Ending";
    case PosClass::kAffix: return "Affix";
    case PosClass::kSymbols: return "Symbols";
    case PosClass::kForeignLanguage: return "ForeignLanguage";
  }
  return "?";
}

PosClass parse_pos_class(std::string_view s) {
  for (std::size_t i = 0; i < kPosClassCount; ++i) {
    auto c = static_cast<PosClass>(i);
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorKind::kParse, "unknown POS class '" + std::string(s) + "'");
}

void PosTally::merge(const PosTally& other) {
  for (std::size_t i = 0; i < kPosClassCount; ++i) {
    occurrences[i] += other.occurrences[i];
    distinct[i].insert(other.distinct[i].begin(), other.distinct[i].end());
  }
}

PosReport make_report(const PosTally& tally) {
  PosReport r;
  for (std::size_t i = 0; i < kPosClassCount; ++i) {
    r.rows[i] = {tally.occurrences[i], tally.distinct[i].size()};
    r.total.duplicate_count += r.rows[i].duplicate_count;
    r.total.unique_count += r.rows[i].unique_count;
  }
  return r;
}

json PosReport::to_json() const {
  json rows_j = json::array();
  for (std::size_t i = 0; i < kPosClassCount; ++i) {
    rows_j.push_back({{"pos", to_string(static_cast<PosClass>(i))},
                      {"duplicate_count", rows[i].duplicate_count},
                      {"unique_count", rows[i].unique_count}});
  }
  return {{"rows", std::move(rows_j)},
          {"total", {{"duplicate_count", total.duplicate_count}, {"unique_count", total.unique_count}}}};
}

std::string PosReport::to_csv() const {
  std::string out = "pos,duplicate_count,unique_count\n";
  for (std::size_t i = 0; i < kPosClassCount; ++i) {
    out += std::string(to_string(static_cast<PosClass>(i))) + "," + std::to_string(rows[i].duplicate_count) + "," +
           std::to_string(rows[i].unique_count) + "\n";
  }
  out += "Total," + std::to_string(total.duplicate_count) + "," + std::to_string(total.unique_count) + "\n";
  return out;
}

json PairedHistogram::to_json() const {
  auto side = [](const BinnedHistogram& h) {
    return json{{"counts", h.counts}, {"underflow", h.underflow}, {"overflow", h.overflow}};
  };
  return {{"edges", a.edges}, {"a", side(a)}, {"b", side(b)}};
}

std::string PairedHistogram::to_csv() const {
  std::string out = "lo,hi,a,b\n";
  for (std::size_t k = 0; k + 1 < a.edges.size(); ++k) {
    out += format_number(a.edges[k]) + "," + format_number(a.edges[k + 1]) + "," + std::to_string(a.counts[k]) +
           "," + std::to_string(b.counts[k]) + "\n";
  }
  return out;
}

// ---- analyzer --------------------------------------------------------------

namespace {

bool is_punct(char32_t c) {
  if (c < 0x80) return std::ispunct(static_cast<int>(c)) != 0;
  return (c >= 0x2010 && c <= 0x206F) || (c >= 0x3000 && c <= 0x303F) || (c >= 0xFF01 && c <= 0xFF0F) ||
         (c >= 0xFF1A && c <= 0xFF20) || c == 0xB7;
}

bool is_hangul(char32_t c) { return (c >= 0xAC00 && c <= 0xD7A3) || (c >= 0x1100 && c <= 0x11FF) || (c >= 0x3130 && c <= 0x318F); }
bool is_digit(char32_t c) { return c >= '0' && c <= '9'; }

std::string encode(const std::vector<char32_t>& cps, std::size_t b, std::size_t e) {
  std::string out;
  for (std::size_t i = b; i < e; ++i) out += text::encode_utf8(cps[i]);
  return out;
}

}  // namespace

DictionaryAnalyzer::DictionaryAnalyzer(std::map<std::string, PosClass> dictionary) : dict_(std::move(dictionary)) {
  for (const auto& [w, c] : dict_) {
    if (c == PosClass::kRelational || c == PosClass::kEnding) suffixes_.emplace_back(w, c);
  }
  std::stable_sort(suffixes_.begin(), suffixes_.end(),
                   [](const auto& x, const auto& y) { return x.first.size() > y.first.size(); });
}

DictionaryAnalyzer DictionaryAnalyzer::from_tsv(const std::string& path) {
  std::istringstream in(text::read_file(path));
  std::map<std::string, PosClass> dict;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto tab = t.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorKind::kParse, path + ":" + std::to_string(no) + ": expected surface<TAB>class");
    }
    dict[std::string(text::trim(t.substr(0, tab)))] = parse_pos_class(text::trim(t.substr(tab + 1)));
  }
  return DictionaryAnalyzer(std::move(dict));
}

std::vector<MorphToken> DictionaryAnalyzer::analyze(std::string_view input) const {
  std::vector<MorphToken> out;
  for (auto word : text::split_words(input)) {
    auto cps = text::decode_utf8(word);
    std::size_t b = 0, e = cps.size();
    while (b < e && is_punct(cps[b])) {
      out.push_back({text::encode_utf8(cps[b]), PosClass::kSymbols});
      ++b;
    }
    std::vector<MorphToken> trailing;
    while (e > b && is_punct(cps[e - 1])) {
      trailing.push_back({text::encode_utf8(cps[e - 1]), PosClass::kSymbols});
      --e;
    }
    if (b < e) {
      std::string core = encode(cps, b, e);
      if (auto it = dict_.find(core); it != dict_.end()) {
        out.push_back({core, it->second});
      } else if (std::all_of(cps.begin() + static_cast<long>(b), cps.begin() + static_cast<long>(e), is_digit)) {
        out.push_back({core, PosClass::kSymbols});
      } else if (std::none_of(cps.begin() + static_cast<long>(b), cps.begin() + static_cast<long>(e), is_hangul)) {
        out.push_back({core, PosClass::kForeignLanguage});
      } else {
        bool split = false;
        for (const auto& [suffix, cls] : suffixes_) {
          if (core.size() > suffix.size() && core.ends_with(suffix)) {
            std::string stem = core.substr(0, core.size() - suffix.size());
            auto st = dict_.find(stem);
            out.push_back({stem, st != dict_.end() ? st->second : PosClass::kNoun});
            out.push_back({suffix, cls});
            split = true;
            break;
          }
        }
        if (!split) out.push_back({core, PosClass::kNoun});
      }
    }
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
  }
  return out;
}

// ---- shared kernels --------------------------------------------------------

namespace detail {

void count_positions(std::string_view text, PositionalFrequency& into) {
  auto words = text::split_words(text);
  if (words.empty()) return;
  ++into.sentences;
  const std::size_t n = std::min(words.size(), into.max_position);
  if (into.positions.size() < n) into.positions.resize(n);
  for (std::size_t i = 0; i < n; ++i) ++into.positions[i][std::string(words[i])];
}

void count_length(std::string_view text, LengthDistribution& into) {
  ++into.histogram[text::split_words(text).size()];
}

void tally_text(std::string_view text, std::size_t index, const MorphAnalyzer& analyzer, PosTally& into) {
  std::vector<MorphToken> toks;
  try {
    toks = analyzer.analyze(text);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kFormat, "morphological analyzer failed on text " + std::to_string(index) + ": " + e.what(),
                {{"text_index", index}});
  }
  for (auto& t : toks) {
    auto c = static_cast<std::size_t>(t.pos);
    ++into.occurrences[c];
    into.distinct[c].insert(std::move(t.surface));
  }
}

void check_edges(const std::vector<double>& edges) {
  if (edges.size() < 2) throw Error(ErrorKind::kContract, "histogram needs at least two bin edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i])) throw Error(ErrorKind::kContract, "bin edges must be finite");
    if (i && !(edges[i] > edges[i - 1])) {
      throw Error(ErrorKind::kContract, "bin edges must be strictly increasing (edge " + std::to_string(i) + ")");
    }
  }
}

BinnedHistogram empty_histogram(const std::vector<double>& edges) {
  BinnedHistogram h;
  h.edges = edges;
  h.counts.assign(edges.size() - 1, 0);
  return h;
}

void bin_value(double v, BinnedHistogram& h) {
  if (v < h.edges.front()) {
    ++h.underflow;
    return;
  }
  if (v >= h.edges.back()) {
    ++h.overflow;
    return;
  }
  auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
  ++h.counts[static_cast<std::size_t>(it - h.edges.begin()) - 1];
}

}  // namespace detail

// ---- OpenMP kernels --------------------------------------------------------
//
// Each thread accumulates a private partial over a contiguous chunk; partials
// are merged in thread order, so results do not depend on scheduling.

namespace {

template <typename Partial, typename Init, typename Body>
std::vector<Partial> chunked(std::size_t n, Init init, Body body) {
  std::vector<Partial> partials(static_cast<std::size_t>(omp_get_max_threads()), init());
  std::vector<std::pair<std::size_t, std::exception_ptr>> failures;
#pragma omp parallel
  {
    Partial& mine = partials[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
      try {
        body(static_cast<std::size_t>(i), mine);
      } catch (...) {
#pragma omp critical(forge_stats_failure)
        failures.emplace_back(static_cast<std::size_t>(i), std::current_exception());
      }
    }
  }
  if (!failures.empty()) {
    auto first = std::min_element(failures.begin(), failures.end(),
                                  [](const auto& x, const auto& y) { return x.first < y.first; });
    std::rethrow_exception(first->second);
  }
  return partials;
}

}  // namespace

PositionalFrequency positional_frequency(const std::vector<std::string>& texts, std::size_t max_position) {
  if (max_position < 1) throw Error(ErrorKind::kContract, "max_position must be >= 1");
  auto init = [&] {
    PositionalFrequency p;
    p.max_position = max_position;
    return p;
  };
  auto parts = chunked<PositionalFrequency>(texts.size(), init,
                                            [&](std::size_t i, PositionalFrequency& p) { detail::count_positions(texts[i], p); });
  PositionalFrequency out = init();
  for (const auto& p : parts) out.merge(p);
  return out;
}

LengthDistribution length_distribution(const std::vector<std::string>& texts) {
  auto parts = chunked<LengthDistribution>(texts.size(), [] { return LengthDistribution{}; },
                                           [&](std::size_t i, LengthDistribution& d) { detail::count_length(texts[i], d); });
  LengthDistribution out;
  for (const auto& p : parts) {
    for (auto [len, n] : p.histogram) out.histogram[len] += n;
  }
  out.recompute_summary();
  return out;
}

PosTally pos_tally(const std::vector<std::string>& texts, const MorphAnalyzer& analyzer) {
  auto parts = chunked<PosTally>(texts.size(), [] { return PosTally{}; },
                                 [&](std::size_t i, PosTally& t) { detail::tally_text(texts[i], i, analyzer, t); });
  PosTally out;
  for (const auto& p : parts) out.merge(p);
  return out;
}

PosReport pos_report(const std::vector<std::string>& texts, const MorphAnalyzer& analyzer) {
  return make_report(pos_tally(texts, analyzer));
}

std::size_t whitespace_token_count(std::string_view s) { return text::split_words(s).size(); }
std::size_t codepoint_token_count(std::string_view s) {
  std::size_t n = 0;
  for (char32_t c : text::decode_utf8(s)) n += (c == ' ' || c == '\t' || c == '\n' || c == '\r') ? 0 : 1;
  return n;
}

PairedHistogram token_length_histogram(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                       const TokenCounter& tokenizer, const std::vector<double>& edges) {
  detail::check_edges(edges);
  auto side = [&](const std::vector<std::string>& texts) {
    std::vector<std::size_t> lens(texts.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(texts.size()); ++i) {
      try {
        lens[static_cast<std::size_t>(i)] = tokenizer(texts[static_cast<std::size_t>(i)]);
      } catch (...) {
#pragma omp critical(forge_tokhist_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    BinnedHistogram h = detail::empty_histogram(edges);
    for (auto n : lens) detail::bin_value(static_cast<double>(n), h);
    return h;
  };
  return {side(a), side(b)};
}

Field parse_field(std::string_view s) {
  if (s == "question") return Field::kQuestion;
  if (s == "answer") return Field::kAnswer;
  throw Error(ErrorKind::kParse, "field must be 'question' or 'answer', got '" + std::string(s) + "'");
}

std::vector<std::string> extract_texts(const std::vector<dataset::Sample>& samples, Language lang, Field field) {
  std::vector<std::string> out;
  for (const auto& s : samples) {
    for (const auto& t : s.turns) {
      auto it = t.pairs.find(lang);
      if (it == t.pairs.end()) continue;
      out.push_back(field == Field::kQuestion ? it->second.question : it->second.answer);
    }
  }
  return out;
}

}  // namespace forge::stats
