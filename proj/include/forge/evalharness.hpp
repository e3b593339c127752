#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/http_text_client.hpp"
#include "forge/types.hpp"
#include "json.hpp"

namespace forge::eval {

// ---- answer normalization and accuracy ----------------------------------

struct NormalizationRules {
  bool casefold = true;           // ASCII letters only
  bool strip_punctuation = true;  // ASCII, general and CJK punctuation
  // Per language, lists of interchangeable answers; the first entry of each
  // class is its representative.
  std::map<Language, std::vector<std::vector<std::string>>> classes;

  // Throws kConfig if two classes of one language overlap after normalization.
  void validate() const;

  static NormalizationRules from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  // Ships the yes-variant class for Korean: {"네", "예", "yes"}.
  static NormalizationRules defaults();
};

std::string normalize_answer(std::string_view text, Language lang, const NormalizationRules& rules);

struct VqaItem {
  std::string question_id;
  Language language = Language::kEn;
  std::string question;
  std::vector<std::string> gold_answers;
  std::string prediction;
};

struct AccuracyReport {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<bool> per_item;

  nlohmann::json to_json(const std::vector<VqaItem>& items) const;
};

AccuracyReport score_accuracy(const std::vector<VqaItem>& items, const NormalizationRules& rules);

// gold JSONL: {"question_id", "language", "question"?, "answers": [...]}
// predictions JSONL: {"question_id", "prediction"}
std::vector<VqaItem> join_predictions(const std::string& gold_path, const std::string& predictions_path);

// First `limit` whitespace-delimited words joined by single spaces.
std::string truncate_words(std::string_view text, int limit);

// ---- pairwise preference -------------------------------------------------

enum class Outcome { kAWins, kTie, kBWins };
std::string_view to_string(Outcome o);  // "A", "TIE", "B"
Outcome parse_outcome(std::string_view s);
Outcome mirror(Outcome o);

struct PreferenceItem {
  std::string item_id;
  std::string image;
  std::string question;
  std::string answer_a;
  std::string answer_b;
  std::string model_a;
  std::string model_b;
  std::optional<int> word_limit;

  static PreferenceItem from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

std::vector<PreferenceItem> read_preference_items(const std::string& path);

// Swaps answers and model names.
PreferenceItem mirror(const PreferenceItem& item);

// What the judge sees: answers in presentation order, model names hidden.
struct JudgePrompt {
  std::string item_id;
  std::string image;
  std::string question;
  std::string first;   // shown as "Answer A"
  std::string second;  // shown as "Answer B"
  std::string text;    // rendered prompt
};

std::string render_judge_prompt(std::string_view question, std::string_view first, std::string_view second);

// Final line "VERDICT: A|B|TIE" (case-insensitive); otherwise free-text
// phrases such as "answer a is better" or "both similar". Outcome is in
// presentation positions. Throws kFormat with detail.raw_reply.
Outcome parse_judge_reply(std::string_view reply);

class Judge {
 public:
  virtual ~Judge() = default;
  // Raw reply text; kTransport / kTimeout failures are retried by the harness.
  virtual std::string ask(const JudgePrompt& prompt) = 0;
};

// Prefers the answer with more code points; equal lengths tie.
class LongerAnswerJudge final : public Judge {
 public:
  enum class Style { kVerdictLine, kFreeText };
  explicit LongerAnswerJudge(Style style = Style::kVerdictLine) : style_(style) {}
  std::string ask(const JudgePrompt& prompt) override;

 private:
  Style style_;
};

class HttpJudge final : public Judge {
 public:
  HttpJudge(std::string endpoint, std::string model, std::chrono::milliseconds timeout,
            std::string api_key = api_key_from_env());
  std::string ask(const JudgePrompt& prompt) override;

 private:
  HttpTextClient client_;
};

struct JudgeOptions {
  std::uint64_t seed = 0;
  bool randomize_positions = true;
  int max_retries = 2;
  std::chrono::milliseconds backoff{100};
  int parallelism = 4;
};

struct JudgeVerdict {
  std::string item_id;
  Outcome outcome = Outcome::kTie;  // in the item's own A/B terms
  bool swapped = false;             // answer_b was presented first
  std::uint64_t seed = 0;
  std::string raw_reply;

  nlohmann::json to_json() const;
  static JudgeVerdict from_json(const nlohmann::json& j);
};

// Presentation order is swapped iff mix64(fork_seed(seed, item_id)) is odd.
bool presentation_swapped(const std::string& item_id, const JudgeOptions& options);

JudgeVerdict judge_pair(const PreferenceItem& item, Judge& judge, const JudgeOptions& options = {});

struct JudgeFailure {
  std::string item_id;
  std::string message;
};

struct JudgeRun {
  std::vector<JudgeVerdict> verdicts;  // input order, failures omitted
  std::vector<JudgeFailure> failures;
};

JudgeRun judge_all(const std::vector<PreferenceItem>& items, Judge& judge, const JudgeOptions& options = {});

// ---- human ballots and agreement -----------------------------------------

struct HumanBallots {
  std::string item_id;
  std::vector<Outcome> votes;  // exactly 3

  static HumanBallots from_json(const nlohmann::json& j);
};

struct AggregatedVerdict {
  std::string item_id;
  Outcome outcome = Outcome::kTie;

  nlohmann::json to_json() const;
  static AggregatedVerdict from_json(const nlohmann::json& j);
};

// An outcome with at least two votes wins; a three-way split is a tie.
AggregatedVerdict aggregate_human(const HumanBallots& ballots);

struct AgreementMatrix {
  // counts[judge][human], index order A, Tie, B
  std::array<std::array<std::size_t, 3>, 3> counts{};
  std::size_t item_count = 0;
  std::array<std::size_t, 3> judge_totals{};
  std::array<std::size_t, 3> human_totals{};
  // diagonal / judge row total; empty when the row is empty
  std::array<std::optional<double>, 3> rates{};

  nlohmann::json to_json() const;
};

AgreementMatrix agreement(const std::vector<JudgeVerdict>& judge, const std::vector<AggregatedVerdict>& human);

struct PreferenceSummary {
  std::size_t total = 0;
  std::array<std::size_t, 3> counts{};  // A, Tie, B
  // tenths of a percent, largest-remainder rounded so they sum to 1000
  std::array<int, 3> tenths{};

  double a_wins_pct() const { return tenths[0] / 10.0; }
  double tie_pct() const { return tenths[1] / 10.0; }
  double b_wins_pct() const { return tenths[2] / 10.0; }
  nlohmann::json to_json(const std::string& model_a = "A", const std::string& model_b = "B") const;
};

PreferenceSummary preference_summary(const std::vector<Outcome>& outcomes);
PreferenceSummary preference_summary(const std::vector<JudgeVerdict>& verdicts);

}  // namespace forge::eval
