#include "forge/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::eval {

using nlohmann::json;

// ---- normalization ---------------------------------------------------------

namespace {

bool is_punct(char32_t c) {
  if (c < 0x80) return std::ispunct(static_cast<int>(c)) != 0;
  return (c >= 0x2010 && c <= 0x206F) || (c >= 0x3000 && c <= 0x303F) || (c >= 0xFF01 && c <= 0xFF0F) ||
         (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65) ||
         c == 0xA1 || c == 0xBF || c == 0xB7;
}

std::string basic_normalize(std::string_view s, const NormalizationRules& rules) {
  std::string out;
  bool pending_space = false;
  for (char32_t c : text::decode_utf8(s)) {
    if (rules.strip_punctuation && is_punct(c)) continue;
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == 0x3000) {
      pending_space = !out.empty();
      continue;
    }
    if (rules.casefold && c >= 'A' && c <= 'Z') c = c - 'A' + 'a';
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += text::encode_utf8(c);
  }
  return out;
}

}  // namespace

void NormalizationRules::validate() const {
  for (const auto& [lang, cls] : classes) {
    std::map<std::string, std::size_t> owner;
    for (std::size_t i = 0; i < cls.size(); ++i) {
      if (cls[i].empty()) throw Error(ErrorKind::kConfig, "empty equivalence class");
      for (const auto& m : cls[i]) {
        auto n = basic_normalize(m, *this);
        auto [it, fresh] = owner.emplace(n, i);
        if (!fresh && it->second != i) {
          throw Error(ErrorKind::kConfig, "'" + m + "' appears in two " + std::string(to_string(lang)) +
                                              " equivalence classes");
        }
      }
    }
  }
}

NormalizationRules NormalizationRules::from_json(const json& j) {
  NormalizationRules r;
  try {
    r.casefold = j.value("casefold", true);
    r.strip_punctuation = j.value("strip_punctuation", true);
    const auto classes = j.value("classes", json::object());
    for (const auto& [lang, cls] : classes.items()) {
      r.classes[parse_language(lang)] = cls.get<std::vector<std::vector<std::string>>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad normalization rules: ") + e.what());
  }
  r.validate();
  return r;
}

json NormalizationRules::to_json() const {
  json cls = json::object();
  for (const auto& [lang, c] : classes) cls[std::string(forge::to_string(lang))] = c;
  return {{"casefold", casefold}, {"strip_punctuation", strip_punctuation}, {"classes", std::move(cls)}};
}

NormalizationRules NormalizationRules::defaults() {
  NormalizationRules r;
  r.classes[Language::kKo] = {{"네", "예", "yes"}};
  return r;
}

std::string normalize_answer(std::string_view text, Language lang, const NormalizationRules& rules) {
  std::string base = basic_normalize(text, rules);
  if (auto it = rules.classes.find(lang); it != rules.classes.end()) {
    for (const auto& cls : it->second) {
      for (const auto& m : cls) {
        if (basic_normalize(m, rules) == base) return basic_normalize(cls.front(), rules);
      }
    }
  }
  return base;
}

json AccuracyReport::to_json(const std::vector<VqaItem>& items) const {
  json per = json::array();
  for (std::size_t i = 0; i < per_item.size(); ++i) {
    per.push_back({{"question_id", items[i].question_id}, {"correct", static_cast<bool>(per_item[i])}});
  }
  return {{"accuracy", accuracy}, {"correct", correct}, {"total", total}, {"items", std::move(per)}};
}

AccuracyReport score_accuracy(const std::vector<VqaItem>& items, const NormalizationRules& rules) {
  if (items.empty()) throw Error(ErrorKind::kPrecondition, "cannot score an empty item list");
  AccuracyReport r;
  r.total = items.size();
  r.per_item.reserve(items.size());
  for (const auto& item : items) {
    if (item.gold_answers.empty()) {
      throw Error(ErrorKind::kPrecondition, "item '" + item.question_id + "' has no gold answers");
    }
    const std::string pred = normalize_answer(item.prediction, item.language, rules);
    bool ok = std::any_of(item.gold_answers.begin(), item.gold_answers.end(),
                          [&](const std::string& g) { return normalize_answer(g, item.language, rules) == pred; });
    r.per_item.push_back(ok);
    r.correct += ok ? 1 : 0;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

namespace {

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "'", {{"path", path}});
  std::vector<json> out;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, path + ":" + std::to_string(no) + ": " + e.what(), {{"line", no}});
    }
  }
  return out;
}

}  // namespace

std::vector<VqaItem> join_predictions(const std::string& gold_path, const std::string& predictions_path) {
  auto gold = read_jsonl(gold_path);
  auto preds = read_jsonl(predictions_path);
  std::unordered_map<std::string, std::string> by_id;
  try {
    for (const auto& p : preds) by_id[p.at("question_id").get<std::string>()] = p.at("prediction").get<std::string>();
    std::vector<VqaItem> items;
    for (const auto& g : gold) {
      VqaItem item;
      item.question_id = g.at("question_id").get<std::string>();
      item.language = parse_language(g.at("language").get<std::string>());
      item.question = g.value("question", "");
      item.gold_answers = g.at("answers").get<std::vector<std::string>>();
      auto it = by_id.find(item.question_id);
      if (it == by_id.end()) {
        throw Error(ErrorKind::kNotFound, "no prediction for question '" + item.question_id + "'",
                    {{"question_id", item.question_id}});
      }
      item.prediction = it->second;
      items.push_back(std::move(item));
    }
    return items;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad evaluation record: ") + e.what());
  }
}

std::string truncate_words(std::string_view text, int limit) {
  if (limit < 1) throw Error(ErrorKind::kContract, "word limit must be >= 1");
  auto words = text::split_words(text);
  std::string out;
  const std::size_t n = std::min(words.size(), static_cast<std::size_t>(limit));
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

// ---- outcomes / items ------------------------------------------------------

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kAWins: return "A";
    case Outcome::kTie: return "TIE";
    case Outcome::kBWins: return "B";
  }
  return "?";
}

Outcome parse_outcome(std::string_view s) {
  std::string u;
  for (char c : text::trim(s)) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "A" || u == "AWINS" || u == "A_WINS") return Outcome::kAWins;
  if (u == "B" || u == "BWINS" || u == "B_WINS") return Outcome::kBWins;
  if (u == "TIE" || u == "T") return Outcome::kTie;
  throw Error(ErrorKind::kParse, "unknown outcome '" + std::string(s) + "'");
}

Outcome mirror(Outcome o) {
  switch (o) {
    case Outcome::kAWins: return Outcome::kBWins;
    case Outcome::kBWins: return Outcome::kAWins;
    case Outcome::kTie: return Outcome::kTie;
  }
  return o;
}

PreferenceItem PreferenceItem::from_json(const json& j) {
  try {
    PreferenceItem p;
    p.item_id = j.at("item_id").get<std::string>();
    p.image = j.value("image", "");
    p.question = j.at("question").get<std::string>();
    p.answer_a = j.at("answer_a").get<std::string>();
    p.answer_b = j.at("answer_b").get<std::string>();
    p.model_a = j.value("model_a", "");
    p.model_b = j.value("model_b", "");
    if (j.contains("word_limit") && !j["word_limit"].is_null()) p.word_limit = j["word_limit"].get<int>();
    if (text::trim(p.answer_a).empty() || text::trim(p.answer_b).empty()) {
      throw Error(ErrorKind::kPrecondition, "preference item '" + p.item_id + "' has an empty answer");
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad preference item: ") + e.what());
  }
}

json PreferenceItem::to_json() const {
  json j = {{"item_id", item_id}, {"image", image},     {"question", question}, {"answer_a", answer_a},
            {"answer_b", answer_b}, {"model_a", model_a}, {"model_b", model_b},   {"word_limit", nullptr}};
  if (word_limit) j["word_limit"] = *word_limit;
  return j;
}

std::vector<PreferenceItem> read_preference_items(const std::string& path) {
  std::vector<PreferenceItem> out;
  for (const auto& j : read_jsonl(path)) out.push_back(PreferenceItem::from_json(j));
  return out;
}

PreferenceItem mirror(const PreferenceItem& item) {
  PreferenceItem m = item;
  std::swap(m.answer_a, m.answer_b);
  std::swap(m.model_a, m.model_b);
  return m;
}

// ---- judging ---------------------------------------------------------------

std::string render_judge_prompt(std::string_view question, std::string_view first, std::string_view second) {
  std::ostringstream os;
  os << "You are comparing two answers to a question about the attached image.\n"
     << "Question: " << question << "\n\n"
     << "Answer A: " << first << "\n\n"
     << "Answer B: " << second << "\n\n"
     << "Decide which answer is better: 'Answer A is better', 'Answer B is better', or "
        "'Both answers are similar'. Explain briefly, then end with a final line of the form\n"
        "VERDICT: A|B|TIE\n";
  return os.str();
}

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

Outcome parse_judge_reply(std::string_view reply) {
  // Last non-empty line carrying a VERDICT marker wins.
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    std::size_t eol = reply.find('\n', pos);
    if (eol == std::string_view::npos) eol = reply.size();
    lines.push_back(text::trim(reply.substr(pos, eol - pos)));
    pos = eol + 1;
  }
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::string l = lower_ascii(*it);
    if (!l.starts_with("verdict")) continue;
    auto colon = l.find(':');
    if (colon == std::string::npos) continue;
    std::string v = std::string(text::trim(std::string_view(l).substr(colon + 1)));
    while (!v.empty() && (v.back() == '.' || v.back() == '*')) v.pop_back();
    if (v == "a") return Outcome::kAWins;
    if (v == "b") return Outcome::kBWins;
    if (v == "tie") return Outcome::kTie;
    throw Error(ErrorKind::kFormat, "judge verdict line has unknown value '" + v + "'",
                {{"raw_reply", std::string(reply)}});
  }

  static const std::regex kA(R"(\b(answer\s+)?a\s+is\s+better\b)", std::regex::icase);
  static const std::regex kB(R"(\b(answer\s+)?b\s+is\s+better\b)", std::regex::icase);
  static const std::regex kTie(R"(\b(both(\s+answers)?\s+(are\s+)?similar|tie)\b)", std::regex::icase);
  const std::string r(reply);
  const int a = std::regex_search(r, kA) ? 1 : 0;
  const int b = std::regex_search(r, kB) ? 1 : 0;
  const int tie = std::regex_search(r, kTie) ? 1 : 0;
  if (a + b + tie == 1) {
    if (a) return Outcome::kAWins;
    if (b) return Outcome::kBWins;
    return Outcome::kTie;
  }
  throw Error(ErrorKind::kFormat, a + b + tie == 0 ? "judge reply carries no verdict" : "judge reply is ambiguous",
              {{"raw_reply", std::string(reply)}});
}

std::string LongerAnswerJudge::ask(const JudgePrompt& prompt) {
  auto la = text::codepoint_count(prompt.first), lb = text::codepoint_count(prompt.second);
  Outcome o = la > lb ? Outcome::kAWins : la < lb ? Outcome::kBWins : Outcome::kTie;
  if (style_ == Style::kFreeText) {
    switch (o) {
      case Outcome::kAWins: return "Answer A is better because it is more detailed.";
      case Outcome::kBWins: return "Answer B is better because it is more detailed.";
      case Outcome::kTie: return "Both similar in detail and accuracy.";
    }
  }
  return "Compared lengths " + std::to_string(la) + " and " + std::to_string(lb) + ".\nVERDICT: " +
         std::string(to_string(o)) + "\n";
}

HttpJudge::HttpJudge(std::string endpoint, std::string model, std::chrono::milliseconds timeout, std::string api_key)
    : client_(std::move(endpoint), std::move(model), timeout, std::move(api_key)) {}

std::string HttpJudge::ask(const JudgePrompt& prompt) {
  const std::string& img = prompt.image;
  if (img.starts_with("http://") || img.starts_with("https://")) return client_.complete(prompt.text, "", img);
  std::string b64;
  if (!img.empty() && std::filesystem::exists(img)) b64 = text::base64_encode(text::read_file(img));
  return client_.complete(prompt.text, b64, b64.empty() ? img : std::string());
}

json JudgeVerdict::to_json() const {
  return {{"item_id", item_id}, {"outcome", to_string(outcome)}, {"swapped", swapped}, {"seed", seed},
          {"raw_reply", raw_reply}};
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
  try {
    JudgeVerdict v;
    v.item_id = j.at("item_id").get<std::string>();
    v.outcome = parse_outcome(j.at("outcome").get<std::string>());
    v.swapped = j.value("swapped", false);
    v.seed = j.value("seed", std::uint64_t{0});
    v.raw_reply = j.value("raw_reply", "");
    return v;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad judge verdict: ") + e.what());
  }
}

bool presentation_swapped(const std::string& item_id, const JudgeOptions& options) {
  if (!options.randomize_positions) return false;
  return (text::mix64(text::fork_seed(options.seed, item_id)) & 1U) != 0;
}

JudgeVerdict judge_pair(const PreferenceItem& item, Judge& judge, const JudgeOptions& options) {
  if (text::trim(item.answer_a).empty() || text::trim(item.answer_b).empty()) {
    throw Error(ErrorKind::kPrecondition, "preference item '" + item.item_id + "' has an empty answer");
  }
  std::string a = item.answer_a, b = item.answer_b;
  if (item.word_limit) {
    a = truncate_words(a, *item.word_limit);
    b = truncate_words(b, *item.word_limit);
  }
  const bool swapped = presentation_swapped(item.item_id, options);
  JudgePrompt p;
  p.item_id = item.item_id;
  p.image = item.image;
  p.question = item.question;
  p.first = swapped ? b : a;
  p.second = swapped ? a : b;
  p.text = render_judge_prompt(p.question, p.first, p.second);

  std::string reply;
  std::chrono::milliseconds backoff = options.backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      reply = judge.ask(p);
      break;
    } catch (const Error& e) {
      const bool retryable = e.kind() == ErrorKind::kTransport || e.kind() == ErrorKind::kTimeout;
      if (!retryable || attempt > options.max_retries) {
        throw Error(e.kind(), "judge failed on '" + item.item_id + "' after " + std::to_string(attempt) +
                                  " attempts: " + e.what(),
                    {{"item_id", item.item_id}, {"attempts", attempt}});
      }
    }
    if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }

  Outcome presented = parse_judge_reply(reply);
  JudgeVerdict v;
  v.item_id = item.item_id;
  v.outcome = swapped ? mirror(presented) : presented;
  v.swapped = swapped;
  v.seed = options.seed;
  v.raw_reply = std::move(reply);
  return v;
}

JudgeRun judge_all(const std::vector<PreferenceItem>& items, Judge& judge, const JudgeOptions& options) {
  if (options.parallelism < 1) throw Error(ErrorKind::kConfig, "judge parallelism must be >= 1");
  std::vector<std::optional<JudgeVerdict>> verdicts(items.size());
  std::vector<std::optional<JudgeFailure>> failures(items.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      try {
        verdicts[i] = judge_pair(items[i], judge, options);
      } catch (const Error& e) {
        failures[i] = JudgeFailure{items[i].item_id, e.what()};
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(options.parallelism), items.size());
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
  }
  JudgeRun run;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (verdicts[i]) run.verdicts.push_back(std::move(*verdicts[i]));
    if (failures[i]) run.failures.push_back(std::move(*failures[i]));
  }
  return run;
}

// ---- human ballots ---------------------------------------------------------

HumanBallots HumanBallots::from_json(const json& j) {
  try {
    HumanBallots b;
    b.item_id = j.at("item_id").get<std::string>();
    for (const auto& v : j.at("votes")) b.votes.push_back(parse_outcome(v.get<std::string>()));
    return b;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad ballot record: ") + e.what());
  }
}

json AggregatedVerdict::to_json() const { return {{"item_id", item_id}, {"outcome", to_string(outcome)}}; }

AggregatedVerdict AggregatedVerdict::from_json(const json& j) {
  try {
    return {j.at("item_id").get<std::string>(), parse_outcome(j.at("outcome").get<std::string>())};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad aggregated verdict: ") + e.what());
  }
}

AggregatedVerdict aggregate_human(const HumanBallots& ballots) {
  if (ballots.votes.size() != 3) {
    throw Error(ErrorKind::kContract,
                "item '" + ballots.item_id + "' has " + std::to_string(ballots.votes.size()) + " votes, expected 3",
                {{"item_id", ballots.item_id}, {"votes", ballots.votes.size()}});
  }
  std::array<int, 3> tally{};
  for (Outcome o : ballots.votes) ++tally[static_cast<std::size_t>(o)];
  for (std::size_t i = 0; i < 3; ++i) {
    if (tally[i] >= 2) return {ballots.item_id, static_cast<Outcome>(i)};
  }
  return {ballots.item_id, Outcome::kTie};
}

// ---- agreement ---------------------------------------------------------------

json AgreementMatrix::to_json() const {
  json rates_j = json::array();
  for (const auto& r : rates) rates_j.push_back(r ? json(*r) : json(nullptr));
  return {{"order", {"A", "TIE", "B"}},
          {"counts", counts},
          {"item_count", item_count},
          {"judge_totals", judge_totals},
          {"human_totals", human_totals},
          {"rates", std::move(rates_j)}};
}

AgreementMatrix agreement(const std::vector<JudgeVerdict>& judge, const std::vector<AggregatedVerdict>& human) {
  std::map<std::string, Outcome> j_by, h_by;
  for (const auto& v : judge) {
    if (!j_by.emplace(v.item_id, v.outcome).second) {
      throw Error(ErrorKind::kConflict, "duplicate judge verdict for '" + v.item_id + "'");
    }
  }
  for (const auto& v : human) {
    if (!h_by.emplace(v.item_id, v.outcome).second) {
      throw Error(ErrorKind::kConflict, "duplicate human verdict for '" + v.item_id + "'");
    }
  }
  std::vector<std::string> only_judge, only_human;
  for (const auto& [id, _] : j_by) {
    if (!h_by.contains(id)) only_judge.push_back(id);
  }
  for (const auto& [id, _] : h_by) {
    if (!j_by.contains(id)) only_human.push_back(id);
  }
  if (!only_judge.empty() || !only_human.empty()) {
    std::vector<std::string> all = only_judge;
    all.insert(all.end(), only_human.begin(), only_human.end());
    throw Error(ErrorKind::kContract, "judge and human item sets differ: " + text::join(all, ", "),
                {{"only_judge", only_judge}, {"only_human", only_human}});
  }
  AgreementMatrix m;
  for (const auto& [id, jo] : j_by) {
    auto r = static_cast<std::size_t>(jo), c = static_cast<std::size_t>(h_by.at(id));
    ++m.counts[r][c];
    ++m.judge_totals[r];
    ++m.human_totals[c];
    ++m.item_count;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (m.judge_totals[i] > 0) {
      m.rates[i] = static_cast<double>(m.counts[i][i]) / static_cast<double>(m.judge_totals[i]);
    }
  }
  return m;
}

// ---- summary -----------------------------------------------------------------

json PreferenceSummary::to_json(const std::string& model_a, const std::string& model_b) const {
  return {{"total", total},
          {"model_a", model_a},
          {"model_b", model_b},
          {"counts", {{"A", counts[0]}, {"TIE", counts[1]}, {"B", counts[2]}}},
          {"percent", {{"A", a_wins_pct()}, {"TIE", tie_pct()}, {"B", b_wins_pct()}}}};
}

PreferenceSummary preference_summary(const std::vector<Outcome>& outcomes) {
  if (outcomes.empty()) throw Error(ErrorKind::kPrecondition, "cannot summarize zero verdicts");
  PreferenceSummary s;
  s.total = outcomes.size();
  for (Outcome o : outcomes) ++s.counts[static_cast<std::size_t>(o)];
  // Largest remainder over 1000 tenths-of-a-percent; ties go to A, then Tie, then B.
  std::array<std::size_t, 3> rem{};
  int assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t scaled = s.counts[i] * 1000;
    s.tenths[i] = static_cast<int>(scaled / s.total);
    rem[i] = scaled % s.total;
    assigned += s.tenths[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return rem[x] > rem[y]; });
  for (std::size_t k = 0; assigned < 1000; ++k, ++assigned) ++s.tenths[order[k % 3]];
  return s;
}

PreferenceSummary preference_summary(const std::vector<JudgeVerdict>& verdicts) {
  std::vector<Outcome> o;
  o.reserve(verdicts.size());
  for (const auto& v : verdicts) o.push_back(v.outcome);
  return preference_summary(o);
}

}  // namespace forge::eval
