#include "forge/inspection.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::inspection {

using nlohmann::json;

std::string_view to_string(LanguagePair p) {
  return p == LanguagePair::kEnKo ? "en-ko" : "en-zh";
}

LanguagePair parse_language_pair(std::string_view s) {
  if (s == "en-ko") return LanguagePair::kEnKo;
  if (s == "en-zh") return LanguagePair::kEnZh;
  throw Error(ErrorKind::kParse, "unknown language pair '" + std::string(s) + "'");
}

std::vector<LanguagePair> applicable_pairs(const dataset::Sample& s) {
  auto has = [&](Language l) {
    return std::find(s.languages.begin(), s.languages.end(), l) != s.languages.end();
  };
  std::vector<LanguagePair> out;
  if (!has(Language::kEn)) return out;
  if (has(Language::kKo)) out.push_back(LanguagePair::kEnKo);
  if (has(Language::kZh)) out.push_back(LanguagePair::kEnZh);
  return out;
}

Annotator Annotator::from_json(const json& j) {
  try {
    Annotator a;
    a.id = j.at("id").get<std::string>();
    for (const auto& c : j.at("capabilities")) a.capabilities.push_back(parse_language_pair(c.get<std::string>()));
    if (a.id.empty()) throw Error(ErrorKind::kConfig, "annotator id is empty");
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad annotator record: ") + e.what());
  }
}

json Annotator::to_json() const {
  json caps = json::array();
  for (auto c : capabilities) caps.push_back(std::string(to_string(c)));
  return {{"id", id}, {"capabilities", caps}};
}

std::string_view to_string(TaskState s) { return s == TaskState::kPending ? "Pending" : "Done"; }

TaskState parse_task_state(std::string_view s) {
  if (s == "Pending") return TaskState::kPending;
  if (s == "Done") return TaskState::kDone;
  throw Error(ErrorKind::kParse, "unknown task state '" + std::string(s) + "'");
}

std::string_view to_string(VerdictOutcome o) { return o == VerdictOutcome::kPass ? "Pass" : "Error"; }

std::string_view to_string(ErrorReason r) {
  switch (r) {
    case ErrorReason::kProperNounObject: return "ProperNounObject";
    case ErrorReason::kCulturalDifference: return "CulturalDifference";
    case ErrorReason::kOther: return "Other";
  }
  return "Other";
}

ErrorReason parse_error_reason(std::string_view s) {
  if (s == "ProperNounObject") return ErrorReason::kProperNounObject;
  if (s == "CulturalDifference") return ErrorReason::kCulturalDifference;
  if (s == "Other") return ErrorReason::kOther;
  throw Error(ErrorKind::kValidation, "unknown error reason '" + std::string(s) + "'");
}

Verdict Verdict::pass(std::string task_id) {
  Verdict v;
  v.task_id = std::move(task_id);
  return v;
}

Verdict Verdict::error(std::string task_id, ErrorReason reason, std::string note) {
  Verdict v;
  v.task_id = std::move(task_id);
  v.outcome = VerdictOutcome::kError;
  v.reason = reason;
  v.note = std::move(note);
  return v;
}

void Verdict::validate() const {
  if (task_id.empty()) throw Error(ErrorKind::kValidation, "verdict has no task_id");
  if (outcome == VerdictOutcome::kPass && reason) {
    throw Error(ErrorKind::kValidation, "a Pass verdict cannot carry a reason", {{"task_id", task_id}});
  }
  if (outcome == VerdictOutcome::kError && !reason) {
    throw Error(ErrorKind::kValidation, "an Error verdict needs a reason", {{"task_id", task_id}});
  }
  if (reason == ErrorReason::kOther && text::trim(note).empty()) {
    throw Error(ErrorKind::kValidation, "reason Other needs a note", {{"task_id", task_id}});
  }
}

json Verdict::to_json() const {
  json j{{"task_id", task_id}, {"outcome", std::string(to_string(outcome))}, {"timestamp", timestamp}};
  if (reason) j["reason"] = std::string(to_string(*reason));
  if (!note.empty()) j["note"] = note;
  return j;
}

Verdict Verdict::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kValidation, "verdict must be a JSON object");
  Verdict v;
  try {
    v.task_id = j.at("task_id").get<std::string>();
    const auto outcome = j.at("outcome").get<std::string>();
    if (outcome == "Pass") {
      v.outcome = VerdictOutcome::kPass;
    } else if (outcome == "Error") {
      v.outcome = VerdictOutcome::kError;
    } else {
      throw Error(ErrorKind::kValidation, "outcome must be Pass or Error, got '" + outcome + "'");
    }
    if (j.contains("reason") && !j["reason"].is_null()) v.reason = parse_error_reason(j["reason"].get<std::string>());
    v.note = j.value("note", "");
    v.timestamp = j.value("timestamp", "");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("malformed verdict: ") + e.what());
  }
  v.validate();
  return v;
}

json ReviewTask::to_json() const {
  json j{{"task_id", task_id},
         {"sample_id", sample_id},
         {"language_pair", std::string(to_string(pair))},
         {"assignee", assignee},
         {"state", std::string(to_string(state))}};
  if (verdict) j["verdict"] = verdict->to_json();
  return j;
}

ReviewTask ReviewTask::from_json(const json& j) {
  try {
    ReviewTask t;
    t.task_id = j.at("task_id").get<std::string>();
    t.sample_id = j.at("sample_id").get<std::string>();
    t.pair = parse_language_pair(j.at("language_pair").get<std::string>());
    t.assignee = j.at("assignee").get<std::string>();
    t.state = parse_task_state(j.at("state").get<std::string>());
    if (j.contains("verdict")) t.verdict = Verdict::from_json(j["verdict"]);
    if ((t.state == TaskState::kDone) != t.verdict.has_value()) {
      throw Error(ErrorKind::kParse, "task '" + t.task_id + "': Done iff a verdict is present");
    }
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed task: ") + e.what());
  }
}

std::string task_id_for(const std::string& sample_id, LanguagePair pair) {
  return sample_id + "/" + std::string(to_string(pair));
}

std::vector<ReviewTask> assign_tasks(const std::vector<dataset::Sample>& samples,
                                     const std::vector<Annotator>& annotators) {
  std::map<LanguagePair, std::vector<std::string>> capable;
  for (const auto& a : annotators) {
    for (auto c : a.capabilities) {
      auto& v = capable[c];
      if (std::find(v.begin(), v.end(), a.id) == v.end()) v.push_back(a.id);
    }
  }
  std::map<LanguagePair, std::size_t> next;
  std::vector<ReviewTask> tasks;
  for (const auto& s : samples) {
    for (auto pair : applicable_pairs(s)) {
      auto it = capable.find(pair);
      if (it == capable.end() || it->second.empty()) {
        throw Error(ErrorKind::kConfig,
                    "no annotator can review language pair " + std::string(to_string(pair)),
                    {{"language_pair", std::string(to_string(pair))}, {"sample_id", s.sample_id}});
      }
      ReviewTask t;
      t.sample_id = s.sample_id;
      t.pair = pair;
      t.task_id = task_id_for(s.sample_id, pair);
      t.assignee = it->second[next[pair]++ % it->second.size()];
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

namespace {

json row_json(const BoardRow& r) {
  return {{"assigned", r.assigned}, {"passed", r.passed}, {"errored", r.errored}, {"pending", r.pending}};
}

void count(BoardRow& r, const ReviewTask& t) {
  ++r.assigned;
  if (t.state == TaskState::kPending || !t.verdict) {
    ++r.pending;
  } else if (t.verdict->outcome == VerdictOutcome::kPass) {
    ++r.passed;
  } else {
    ++r.errored;
  }
}

}  // namespace

json BoardStats::to_json() const {
  json rows = json::array();
  for (const auto& [id, r] : per_annotator) {
    auto j = row_json(r);
    j["annotator"] = id;
    rows.push_back(std::move(j));
  }
  return {{"annotators", rows}, {"global", row_json(global)}};
}

BoardStats board_stats(const std::vector<ReviewTask>& tasks) {
  BoardStats b;
  for (const auto& t : tasks) {
    count(b.per_annotator[t.assignee], t);
    count(b.global, t);
  }
  return b;
}

std::pair<std::vector<dataset::Sample>, dataset::DatasetManifest> apply_removals(
    const std::vector<dataset::Sample>& samples, const std::vector<ReviewTask>& tasks, std::string name,
    std::optional<std::string> parent) {
  std::set<std::string> present;
  for (const auto& s : samples) present.insert(s.sample_id);
  json pending = json::array();
  std::set<std::string> removals;
  for (const auto& t : tasks) {
    if (!present.contains(t.sample_id)) continue;
    if (t.state != TaskState::kDone || !t.verdict) {
      pending.push_back(t.task_id);
    } else if (t.verdict->outcome == VerdictOutcome::kError) {
      removals.insert(t.sample_id);
    }
  }
  if (!pending.empty()) {
    throw Error(ErrorKind::kPrecondition, std::to_string(pending.size()) + " review task(s) still pending",
                {{"pending", pending}});
  }
  return dataset::derive_subset(samples, removals, std::move(name), std::move(parent));
}

std::vector<ReviewTask> read_tasks(const std::string& path) {
  std::istringstream in(text::read_file(path));
  std::vector<ReviewTask> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(ReviewTask::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, "corrupt task at line " + std::to_string(lineno), {{"line", lineno}, {"path", path}});
    }
  }
  return out;
}

void write_tasks(const std::vector<ReviewTask>& tasks, const std::string& path) {
  std::string out;
  for (const auto& t : tasks) out += t.to_json().dump() + "\n";
  text::write_file(path, out);
}

namespace {

void apply_verdict(std::vector<ReviewTask>& tasks, std::map<std::string, std::size_t>& index, Verdict v) {
  auto it = index.find(v.task_id);
  if (it == index.end()) throw Error(ErrorKind::kNotFound, "unknown task '" + v.task_id + "'", {{"task_id", v.task_id}});
  auto& t = tasks[it->second];
  if (t.state == TaskState::kDone) {
    throw Error(ErrorKind::kConflict, "task '" + v.task_id + "' already has a verdict",
                {{"task_id", v.task_id}, {"existing", t.verdict->to_json()}});
  }
  t.state = TaskState::kDone;
  t.verdict = std::move(v);
}

std::map<std::string, std::size_t> index_tasks(const std::vector<ReviewTask>& tasks) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!index.emplace(tasks[i].task_id, i).second) {
      throw Error(ErrorKind::kConflict, "duplicate task id '" + tasks[i].task_id + "'");
    }
  }
  return index;
}

}  // namespace

std::uint64_t replay_log(std::vector<ReviewTask>& tasks, const std::string& log_path, std::uint64_t after_seq) {
  auto index = index_tasks(tasks);
  std::ifstream in(log_path);
  if (!in) return after_seq;
  std::uint64_t last = after_seq;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      // a torn final write is tolerated, anything earlier is corruption
      if (in.peek() == EOF) break;
      throw Error(ErrorKind::kParse, "corrupt verdict log line " + std::to_string(lineno),
                  {{"line", lineno}, {"path", log_path}});
    }
    const auto seq = j.at("seq").get<std::uint64_t>();
    if (seq <= after_seq) continue;
    apply_verdict(tasks, index, Verdict::from_json(j.at("verdict")));
    last = seq;
  }
  return last;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

InspectionService::InspectionService(std::vector<dataset::Sample> samples, std::vector<ReviewTask> tasks,
                                     std::optional<std::filesystem::path> log_path, Clock clock)
    : InspectionService(std::move(samples), std::move(tasks), std::move(log_path), std::move(clock), 0) {}

InspectionService::InspectionService(std::vector<dataset::Sample> samples, std::vector<ReviewTask> tasks,
                                     std::optional<std::filesystem::path> log_path, Clock clock, std::uint64_t seq)
    : samples_(std::move(samples)),
      tasks_(std::move(tasks)),
      log_path_(std::move(log_path)),
      clock_(std::move(clock)),
      seq_(seq) {
  for (std::size_t i = 0; i < samples_.size(); ++i) sample_index_.emplace(samples_[i].sample_id, i);
  task_index_ = index_tasks(tasks_);
  for (const auto& t : tasks_) {
    if (!sample_index_.contains(t.sample_id)) {
      throw Error(ErrorKind::kNotFound, "task '" + t.task_id + "' refers to unknown sample", {{"task_id", t.task_id}});
    }
  }
}

InspectionService InspectionService::recover(std::vector<dataset::Sample> samples,
                                             std::vector<ReviewTask> initial_tasks,
                                             const std::filesystem::path& snapshot_path,
                                             const std::filesystem::path& log_path, Clock clock) {
  std::uint64_t seq = 0;
  if (std::filesystem::exists(snapshot_path)) {
    json snap;
    try {
      snap = json::parse(text::read_file(snapshot_path.string()));
      seq = snap.at("seq").get<std::uint64_t>();
      initial_tasks.clear();
      for (const auto& t : snap.at("tasks")) initial_tasks.push_back(ReviewTask::from_json(t));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, std::string("corrupt snapshot: ") + e.what(), {{"path", snapshot_path.string()}});
    }
  }
  seq = replay_log(initial_tasks, log_path.string(), seq);
  return InspectionService(std::move(samples), std::move(initial_tasks), log_path, std::move(clock), seq);
}

void InspectionService::set_image_uris(std::map<std::string, std::string> uris) {
  std::unique_lock lock(mu_);
  image_uris_ = std::move(uris);
}

std::vector<ReviewTask> InspectionService::tasks(const std::optional<std::string>& assignee,
                                                 const std::optional<TaskState>& state) const {
  std::shared_lock lock(mu_);
  std::vector<ReviewTask> out;
  for (const auto& t : tasks_) {
    if (assignee && t.assignee != *assignee) continue;
    if (state && t.state != *state) continue;
    out.push_back(t);
  }
  return out;
}

ReviewTask InspectionService::task(const std::string& task_id) const {
  std::shared_lock lock(mu_);
  auto it = task_index_.find(task_id);
  if (it == task_index_.end()) throw Error(ErrorKind::kNotFound, "unknown task '" + task_id + "'", {{"task_id", task_id}});
  return tasks_[it->second];
}

dataset::Sample InspectionService::sample(const std::string& sample_id) const {
  std::shared_lock lock(mu_);
  auto it = sample_index_.find(sample_id);
  if (it == sample_index_.end()) {
    throw Error(ErrorKind::kNotFound, "unknown sample '" + sample_id + "'", {{"sample_id", sample_id}});
  }
  return samples_[it->second];
}

std::optional<std::string> InspectionService::image_uri(const std::string& image_id) const {
  std::shared_lock lock(mu_);
  auto it = image_uris_.find(image_id);
  if (it == image_uris_.end()) return std::nullopt;
  return it->second;
}

ReviewTask InspectionService::record_verdict(Verdict verdict) {
  verdict.validate();
  std::unique_lock lock(mu_);
  auto it = task_index_.find(verdict.task_id);
  if (it == task_index_.end()) {
    throw Error(ErrorKind::kNotFound, "unknown task '" + verdict.task_id + "'", {{"task_id", verdict.task_id}});
  }
  if (tasks_[it->second].state == TaskState::kDone) {
    throw Error(ErrorKind::kConflict, "task '" + verdict.task_id + "' already has a verdict",
                {{"task_id", verdict.task_id}, {"existing", tasks_[it->second].verdict->to_json()}});
  }
  if (verdict.timestamp.empty()) verdict.timestamp = clock_();
  const std::uint64_t seq = seq_ + 1;
  if (log_path_) {
    std::ofstream out(*log_path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot append to verdict log", {{"path", log_path_->string()}});
    out << json{{"seq", seq}, {"verdict", verdict.to_json()}}.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorKind::kIo, "write to verdict log failed", {{"path", log_path_->string()}});
  }
  seq_ = seq;
  auto& t = tasks_[it->second];
  t.state = TaskState::kDone;
  t.verdict = std::move(verdict);
  return t;
}

BoardStats InspectionService::board() const {
  std::shared_lock lock(mu_);
  return board_stats(tasks_);
}

std::uint64_t InspectionService::last_seq() const {
  std::shared_lock lock(mu_);
  return seq_;
}

void InspectionService::snapshot(const std::filesystem::path& path) const {
  json j;
  {
    std::shared_lock lock(mu_);
    json tasks = json::array();
    for (const auto& t : tasks_) tasks.push_back(t.to_json());
    j = {{"seq", seq_}, {"tasks", std::move(tasks)}};
  }
  auto tmp = path;
  tmp += ".tmp";
  text::write_file(tmp.string(), j.dump() + "\n");
  std::filesystem::rename(tmp, path);
}

std::pair<std::vector<dataset::Sample>, dataset::DatasetManifest> InspectionService::apply_removals(
    std::string name, std::optional<std::string> parent) const {
  std::shared_lock lock(mu_);
  return inspection::apply_removals(samples_, tasks_, std::move(name), std::move(parent));
}

// ---- preference ballots ----------------------------------------------------

Ballot Ballot::from_json(const json& j) {
  try {
    Ballot b;
    b.item_id = j.at("item_id").get<std::string>();
    b.annotator = j.at("annotator").get<std::string>();
    b.choice = eval::parse_outcome(j.at("choice").get<std::string>());
    if (b.annotator.empty()) throw Error(ErrorKind::kValidation, "ballot has no annotator");
    return b;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("malformed ballot: ") + e.what());
  }
}

json Ballot::to_json() const {
  return {{"item_id", item_id}, {"annotator", annotator}, {"choice", std::string(eval::to_string(choice))}};
}

json BallotStatus::to_json() const {
  json j{{"item_id", item_id}, {"ballots", ballots}};
  if (outcome) j["outcome"] = std::string(eval::to_string(*outcome));
  return j;
}

PreferenceStore::PreferenceStore(std::vector<eval::PreferenceItem> items, std::uint64_t seed,
                                 std::optional<std::filesystem::path> log_path)
    : items_(std::move(items)), seed_(seed), log_path_(std::move(log_path)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (!index_.emplace(items_[i].item_id, i).second) {
      throw Error(ErrorKind::kConflict, "duplicate preference item '" + items_[i].item_id + "'");
    }
  }
  if (log_path_ && std::filesystem::exists(*log_path_)) {
    std::istringstream in(text::read_file(log_path_->string()));
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        if (in.peek() == EOF) break;
        throw Error(ErrorKind::kParse, "corrupt ballot log", {{"path", log_path_->string()}});
      }
      cast_locked(Ballot::from_json(j), false);
    }
  }
}

bool PreferenceStore::swapped(const std::string& item_id) const {
  eval::JudgeOptions opts;
  opts.seed = seed_;
  return eval::presentation_swapped(item_id, opts);
}

json PreferenceStore::anonymized_items(const std::optional<std::string>& annotator) const {
  std::shared_lock lock(mu_);
  json out = json::array();
  for (const auto& item : items_) {
    if (annotator) {
      auto v = votes_.find(item.item_id);
      if (v != votes_.end() && v->second.contains(*annotator)) continue;
    }
    const bool sw = swapped(item.item_id);
    json j{{"item_id", item.item_id},
           {"image", item.image},
           {"question", item.question},
           {"answer_a", sw ? item.answer_b : item.answer_a},
           {"answer_b", sw ? item.answer_a : item.answer_b}};
    if (item.word_limit) j["word_limit"] = *item.word_limit;
    out.push_back(std::move(j));
  }
  return out;
}

void PreferenceStore::cast_locked(const Ballot& ballot, bool log) {
  if (!index_.contains(ballot.item_id)) {
    throw Error(ErrorKind::kNotFound, "unknown preference item '" + ballot.item_id + "'", {{"item_id", ballot.item_id}});
  }
  auto& votes = votes_[ballot.item_id];
  if (votes.contains(ballot.annotator)) {
    throw Error(ErrorKind::kConflict, "annotator '" + ballot.annotator + "' already voted on this item",
                {{"item_id", ballot.item_id}, {"annotator", ballot.annotator}});
  }
  if (votes.size() >= kPanelSize) {
    throw Error(ErrorKind::kConflict, "item already has a full panel of ballots", {{"item_id", ballot.item_id}});
  }
  if (log && log_path_) {
    std::ofstream out(*log_path_, std::ios::app | std::ios::binary);
    out << ballot.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorKind::kIo, "write to ballot log failed", {{"path", log_path_->string()}});
  }
  votes.emplace(ballot.annotator, swapped(ballot.item_id) ? eval::mirror(ballot.choice) : ballot.choice);
}

BallotStatus PreferenceStore::status_locked(const std::string& item_id) const {
  BallotStatus st;
  st.item_id = item_id;
  auto it = votes_.find(item_id);
  if (it == votes_.end()) return st;
  st.ballots = it->second.size();
  if (st.ballots == kPanelSize) {
    eval::HumanBallots hb;
    hb.item_id = item_id;
    for (const auto& [who, v] : it->second) hb.votes.push_back(v);
    auto agg = eval::aggregate_human(hb).outcome;
    st.outcome = swapped(item_id) ? eval::mirror(agg) : agg;
  }
  return st;
}

BallotStatus PreferenceStore::cast(const Ballot& ballot) {
  std::unique_lock lock(mu_);
  cast_locked(ballot, true);
  return status_locked(ballot.item_id);
}

std::vector<BallotStatus> PreferenceStore::statuses() const {
  std::shared_lock lock(mu_);
  std::vector<BallotStatus> out;
  for (const auto& item : items_) out.push_back(status_locked(item.item_id));
  return out;
}

std::vector<eval::AggregatedVerdict> PreferenceStore::aggregated() const {
  std::shared_lock lock(mu_);
  std::vector<eval::AggregatedVerdict> out;
  for (const auto& item : items_) {
    auto it = votes_.find(item.item_id);
    if (it == votes_.end() || it->second.size() != kPanelSize) continue;
    eval::HumanBallots hb;
    hb.item_id = item.item_id;
    for (const auto& [who, v] : it->second) hb.votes.push_back(v);
    out.push_back(eval::aggregate_human(hb));
  }
  return out;
}

}  // namespace forge::inspection
