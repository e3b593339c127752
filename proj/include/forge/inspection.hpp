#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forge/dataset.hpp"
#include "forge/evalharness.hpp"
#include "json.hpp"

namespace forge::inspection {

enum class LanguagePair { kEnKo, kEnZh };
std::string_view to_string(LanguagePair p);  // "en-ko", "en-zh"
LanguagePair parse_language_pair(std::string_view s);

// Pairs a sample can be reviewed under: English plus one of ko / zh.
std::vector<LanguagePair> applicable_pairs(const dataset::Sample& s);

struct Annotator {
  std::string id;
  std::vector<LanguagePair> capabilities;

  static Annotator from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

enum class TaskState { kPending, kDone };
std::string_view to_string(TaskState s);  // "Pending", "Done"
TaskState parse_task_state(std::string_view s);

enum class VerdictOutcome { kPass, kError };
enum class ErrorReason { kProperNounObject, kCulturalDifference, kOther };
std::string_view to_string(VerdictOutcome o);  // "Pass", "Error"
std::string_view to_string(ErrorReason r);
ErrorReason parse_error_reason(std::string_view s);

struct Verdict {
  std::string task_id;
  VerdictOutcome outcome = VerdictOutcome::kPass;
  std::optional<ErrorReason> reason;  // present iff outcome is Error
  std::string note;                   // required for Other
  std::string timestamp;

  static Verdict pass(std::string task_id);
  static Verdict error(std::string task_id, ErrorReason reason, std::string note = {});

  // kValidation when reason/outcome disagree or Other lacks a note.
  void validate() const;
  nlohmann::json to_json() const;
  static Verdict from_json(const nlohmann::json& j);

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct ReviewTask {
  std::string task_id;  // "<sample_id>/<pair>"
  std::string sample_id;
  LanguagePair pair = LanguagePair::kEnKo;
  std::string assignee;
  TaskState state = TaskState::kPending;
  std::optional<Verdict> verdict;

  nlohmann::json to_json() const;
  static ReviewTask from_json(const nlohmann::json& j);

  friend bool operator==(const ReviewTask&, const ReviewTask&) = default;
};

std::string task_id_for(const std::string& sample_id, LanguagePair pair);

// One task per (sample, applicable pair), round-robin over the annotators
// capable of each pair in the order given. Throws kConfig when a needed pair
// has no capable annotator.
std::vector<ReviewTask> assign_tasks(const std::vector<dataset::Sample>& samples,
                                     const std::vector<Annotator>& annotators);

struct BoardRow {
  std::size_t assigned = 0;
  std::size_t passed = 0;
  std::size_t errored = 0;
  std::size_t pending = 0;

  friend bool operator==(const BoardRow&, const BoardRow&) = default;
};

struct BoardStats {
  std::map<std::string, BoardRow> per_annotator;
  BoardRow global;

  nlohmann::json to_json() const;
  friend bool operator==(const BoardStats&, const BoardStats&) = default;
};

BoardStats board_stats(const std::vector<ReviewTask>& tasks);

// Drops every sample with at least one Error verdict. Tasks for samples not
// in `samples` are ignored, so applying the same tasks to the output is a
// no-op. Throws kPrecondition (detail.pending) if any relevant task is open.
std::pair<std::vector<dataset::Sample>, dataset::DatasetManifest> apply_removals(
    const std::vector<dataset::Sample>& samples, const std::vector<ReviewTask>& tasks,
    std::string name, std::optional<std::string> parent = std::nullopt);

std::vector<ReviewTask> read_tasks(const std::string& path);  // JSONL
void write_tasks(const std::vector<ReviewTask>& tasks, const std::string& path);

// Applies a verdict log ({"seq", "verdict"} per line) onto tasks; entries with
// seq <= after_seq are skipped. Returns the last seq seen.
std::uint64_t replay_log(std::vector<ReviewTask>& tasks, const std::string& log_path,
                         std::uint64_t after_seq = 0);

std::string utc_now_iso8601();

class InspectionService {
 public:
  using Clock = std::function<std::string()>;

  // With a log path every accepted verdict is appended (and flushed) before
  // the call returns.
  InspectionService(std::vector<dataset::Sample> samples, std::vector<ReviewTask> tasks,
                    std::optional<std::filesystem::path> log_path = std::nullopt,
                    Clock clock = utc_now_iso8601);

  // Rebuilds state from a snapshot (if it exists) plus the log tail.
  static InspectionService recover(std::vector<dataset::Sample> samples,
                                   std::vector<ReviewTask> initial_tasks,
                                   const std::filesystem::path& snapshot_path,
                                   const std::filesystem::path& log_path, Clock clock = utc_now_iso8601);

  void set_image_uris(std::map<std::string, std::string> uris);

  // Task creation order; filters are optional.
  std::vector<ReviewTask> tasks(const std::optional<std::string>& assignee = std::nullopt,
                                const std::optional<TaskState>& state = std::nullopt) const;
  ReviewTask task(const std::string& task_id) const;
  dataset::Sample sample(const std::string& sample_id) const;
  std::optional<std::string> image_uri(const std::string& image_id) const;

  // kNotFound for unknown task, kConflict if already Done, kValidation for a
  // malformed verdict. Empty timestamp is filled from the clock.
  ReviewTask record_verdict(Verdict verdict);

  BoardStats board() const;
  std::uint64_t last_seq() const;

  // {"seq", "tasks"}; written atomically via rename.
  void snapshot(const std::filesystem::path& path) const;

  std::pair<std::vector<dataset::Sample>, dataset::DatasetManifest> apply_removals(
      std::string name, std::optional<std::string> parent = std::nullopt) const;

 private:
  InspectionService(std::vector<dataset::Sample> samples, std::vector<ReviewTask> tasks,
                    std::optional<std::filesystem::path> log_path, Clock clock, std::uint64_t seq);

  mutable std::shared_mutex mu_;
  std::vector<dataset::Sample> samples_;
  std::map<std::string, std::size_t> sample_index_;
  std::vector<ReviewTask> tasks_;
  std::map<std::string, std::size_t> task_index_;
  std::map<std::string, std::string> image_uris_;
  std::optional<std::filesystem::path> log_path_;
  Clock clock_;
  std::uint64_t seq_ = 0;
};

// ---- human preference ballots --------------------------------------------

struct Ballot {
  std::string item_id;
  std::string annotator;
  eval::Outcome choice = eval::Outcome::kTie;  // in presentation terms

  static Ballot from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct BallotStatus {
  std::string item_id;
  std::size_t ballots = 0;
  // Once three ballots are in; presentation terms.
  std::optional<eval::Outcome> outcome;

  nlohmann::json to_json() const;
};

// Serves items with model names hidden and answers in a per-item randomized
// order. Ballots arrive in presentation terms and are stored in item terms.
class PreferenceStore {
 public:
  static constexpr std::size_t kPanelSize = 3;

  // An existing ballot log is replayed before new ballots are accepted.
  PreferenceStore(std::vector<eval::PreferenceItem> items, std::uint64_t seed,
                  std::optional<std::filesystem::path> log_path = std::nullopt);

  bool swapped(const std::string& item_id) const;

  // {item_id, image, question, answer_a, answer_b, word_limit?}; with an
  // annotator, items they already voted on are left out.
  nlohmann::json anonymized_items(const std::optional<std::string>& annotator = std::nullopt) const;

  // kNotFound unknown item, kConflict duplicate (item, annotator) or a full
  // panel.
  BallotStatus cast(const Ballot& ballot);

  std::vector<BallotStatus> statuses() const;
  // Item terms, only for items with a full panel.
  std::vector<eval::AggregatedVerdict> aggregated() const;

 private:
  BallotStatus status_locked(const std::string& item_id) const;
  void cast_locked(const Ballot& ballot, bool log);

  mutable std::shared_mutex mu_;
  std::vector<eval::PreferenceItem> items_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t seed_;
  std::optional<std::filesystem::path> log_path_;
  // item -> annotator -> vote in item terms
  std::map<std::string, std::map<std::string, eval::Outcome>> votes_;
};

}  // namespace forge::inspection
