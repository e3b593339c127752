#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <thread>

#include "forge/inspection.hpp"
#include "forge/text.hpp"
#include "test_util.hpp"

using namespace forge;
using namespace forge::inspection;
using eval::Outcome;
using forge_test::make_sample;

namespace {

std::vector<dataset::Sample> samples(int n) {
  std::vector<dataset::Sample> out;
  for (int i = 0; i < n; ++i) out.push_back(make_sample("s" + std::to_string(i)));
  return out;
}

std::vector<Annotator> both_two() {
  return {{"ann1", {LanguagePair::kEnKo, LanguagePair::kEnZh}}, {"ann2", {LanguagePair::kEnKo, LanguagePair::kEnZh}}};
}

InspectionService::Clock fixed_clock() {
  return [] { return std::string("2026-01-01T00:00:00Z"); };
}

eval::PreferenceItem pref_item(const std::string& id) {
  eval::PreferenceItem it;
  it.item_id = id;
  it.image = id + ".jpg";
  it.question = "what?";
  it.answer_a = "alpha answer";
  it.answer_b = "beta";
  it.model_a = "model-x";
  it.model_b = "model-y";
  return it;
}

}  // namespace

TEST(Inspection, TenSamplesTwoAnnotatorsTwentyTasks) {
  auto tasks = assign_tasks(samples(10), both_two());
  ASSERT_EQ(tasks.size(), 20u);
  std::map<std::string, int> per;
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    ++per[t.assignee];
    ids.insert(t.task_id);
    EXPECT_EQ(t.state, TaskState::kPending);
    EXPECT_EQ(t.task_id, task_id_for(t.sample_id, t.pair));
  }
  EXPECT_EQ(per["ann1"], 10);
  EXPECT_EQ(per["ann2"], 10);
  EXPECT_EQ(ids.size(), 20u);
  EXPECT_EQ(tasks[0].task_id, "s0/en-ko");
}

TEST(Inspection, CapabilitiesRestrictAssignment) {
  std::vector<Annotator> anns{{"ko_only", {LanguagePair::kEnKo}}, {"zh_only", {LanguagePair::kEnZh}}};
  for (const auto& t : assign_tasks(samples(6), anns)) {
    EXPECT_EQ(t.assignee, t.pair == LanguagePair::kEnKo ? "ko_only" : "zh_only");
  }
}

TEST(Inspection, EnglishOnlySampleHasNoTasks) {
  EXPECT_TRUE(assign_tasks({make_sample("e", DataKind::kObjectCentric, {Language::kEn})}, both_two()).empty());
  EXPECT_TRUE(assign_tasks({}, both_two()).empty());
}

TEST(Inspection, UncoveredPairIsConfigError) {
  auto e = forge_test::error_of([] { assign_tasks(samples(1), {{"ko_only", {LanguagePair::kEnKo}}}); });
  EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  EXPECT_EQ(e.detail().at("language_pair"), "en-zh");
}

TEST(Inspection, VerdictValidation) {
  EXPECT_NO_THROW(Verdict::pass("t").validate());
  EXPECT_NO_THROW(Verdict::error("t", ErrorReason::kProperNounObject, "Mount Stuart").validate());
  EXPECT_EQ(forge_test::kind_of([] { Verdict::error("t", ErrorReason::kOther).validate(); }), ErrorKind::kValidation);
  Verdict v = Verdict::pass("t");
  v.reason = ErrorReason::kCulturalDifference;
  EXPECT_EQ(forge_test::kind_of([&] { v.validate(); }), ErrorKind::kValidation);
  v = Verdict::error("t", ErrorReason::kCulturalDifference, "creepy food");
  EXPECT_EQ(Verdict::from_json(v.to_json()), v);
  EXPECT_EQ(forge_test::kind_of([] { Verdict::from_json({{"task_id", "t"}, {"outcome", "Error"}}); }),
            ErrorKind::kValidation);
}

TEST(Inspection, RecordVerdictsAndConflicts) {
  auto ss = samples(2);
  InspectionService svc(ss, assign_tasks(ss, both_two()), std::nullopt, fixed_clock());
  auto done = svc.record_verdict(Verdict::pass("s0/en-ko"));
  EXPECT_EQ(done.state, TaskState::kDone);
  EXPECT_EQ(done.verdict->timestamp, "2026-01-01T00:00:00Z");

  auto proper = svc.record_verdict(Verdict::error("s0/en-zh", ErrorReason::kProperNounObject, "Mount Stuart"));
  EXPECT_EQ(proper.verdict->reason, ErrorReason::kProperNounObject);
  EXPECT_EQ(proper.verdict->note, "Mount Stuart");
  auto cultural = svc.record_verdict(Verdict::error("s1/en-ko", ErrorReason::kCulturalDifference, "creepy food"));
  EXPECT_EQ(cultural.verdict->reason, ErrorReason::kCulturalDifference);

  auto e = forge_test::error_of([&] { svc.record_verdict(Verdict::pass("s0/en-ko")); });
  EXPECT_EQ(e.kind(), ErrorKind::kConflict);
  EXPECT_EQ(e.detail().at("existing").at("outcome"), "Pass");
  EXPECT_EQ(forge_test::kind_of([&] { svc.record_verdict(Verdict::pass("nope/en-ko")); }), ErrorKind::kNotFound);
  EXPECT_EQ(forge_test::kind_of([&] { svc.sample("nope"); }), ErrorKind::kNotFound);
  EXPECT_EQ(svc.tasks(std::nullopt, TaskState::kPending).size(), 1u);
}

TEST(Inspection, BoardTwelvePassThreeErrorFivePending) {
  auto ss = samples(10);
  InspectionService svc(ss, assign_tasks(ss, both_two()), std::nullopt, fixed_clock());
  auto all = svc.tasks();
  for (int i = 0; i < 12; ++i) svc.record_verdict(Verdict::pass(all[i].task_id));
  for (int i = 12; i < 15; ++i) svc.record_verdict(Verdict::error(all[i].task_id, ErrorReason::kProperNounObject));
  auto b = svc.board();
  EXPECT_EQ(b.global, (BoardRow{20, 12, 3, 5}));
  BoardRow sum;
  for (const auto& [a, r] : b.per_annotator) {
    sum.assigned += r.assigned;
    sum.passed += r.passed;
    sum.errored += r.errored;
    sum.pending += r.pending;
  }
  EXPECT_EQ(sum, b.global);
}

TEST(InspectionProperty, BoardRowsSumAndBalance) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto ss = samples(1 + rng() % 15);
    std::vector<Annotator> anns;
    const int na = 1 + rng() % 4;
    for (int i = 0; i < na; ++i) anns.push_back({"a" + std::to_string(i), {LanguagePair::kEnKo, LanguagePair::kEnZh}});
    auto tasks = assign_tasks(ss, anns);
    for (auto& t : tasks) {
      const auto r = rng() % 3;
      if (r == 0) continue;
      t.state = TaskState::kDone;
      t.verdict = r == 1 ? Verdict::pass(t.task_id) : Verdict::error(t.task_id, ErrorReason::kCulturalDifference);
    }
    auto b = board_stats(tasks);
    BoardRow sum;
    for (const auto& [a, r] : b.per_annotator) {
      EXPECT_EQ(r.assigned, r.passed + r.errored + r.pending);
      sum.assigned += r.assigned;
      sum.passed += r.passed;
      sum.errored += r.errored;
      sum.pending += r.pending;
    }
    EXPECT_EQ(sum, b.global);
    EXPECT_EQ(b.global.assigned, tasks.size());
  }
}

TEST(Inspection, LogReplayRecoversBoard) {
  forge_test::TempDir tmp;
  auto ss = samples(5);
  auto initial = assign_tasks(ss, both_two());
  BoardStats before;
  {
    InspectionService svc(ss, initial, tmp.file("v.log"), fixed_clock());
    svc.record_verdict(Verdict::pass("s0/en-ko"));
    svc.record_verdict(Verdict::error("s1/en-zh", ErrorReason::kOther, "blurry"));
    svc.snapshot(tmp.file("snap.json"));
    svc.record_verdict(Verdict::pass("s2/en-ko"));
    svc.record_verdict(Verdict::error("s3/en-ko", ErrorReason::kProperNounObject));
    before = svc.board();
    EXPECT_EQ(svc.last_seq(), 4u);
  }
  auto from_log = InspectionService::recover(ss, initial, tmp.file("none.json"), tmp.file("v.log"), fixed_clock());
  EXPECT_EQ(from_log.board(), before);
  auto from_snap = InspectionService::recover(ss, initial, tmp.file("snap.json"), tmp.file("v.log"), fixed_clock());
  EXPECT_EQ(from_snap.board(), before);
  EXPECT_EQ(from_snap.tasks(), from_log.tasks());
  EXPECT_EQ(from_snap.last_seq(), 4u);
}

TEST(Inspection, TornFinalLogLineIsTolerated) {
  forge_test::TempDir tmp;
  auto ss = samples(2);
  auto initial = assign_tasks(ss, both_two());
  {
    InspectionService svc(ss, initial, tmp.file("v.log"), fixed_clock());
    svc.record_verdict(Verdict::pass("s0/en-ko"));
  }
  {
    std::ofstream out(tmp.file("v.log"), std::ios::app);
    out << R"({"seq":2,"verdict":{"task_id":"s1/en)";
  }
  auto svc = InspectionService::recover(ss, initial, tmp.file("none.json"), tmp.file("v.log"), fixed_clock());
  EXPECT_EQ(svc.board().global.passed, 1u);
}

TEST(Inspection, ConcurrentVerdictsAllLand) {
  forge_test::TempDir tmp;
  auto ss = samples(40);
  InspectionService svc(ss, assign_tasks(ss, both_two()), tmp.file("v.log"), fixed_clock());
  auto all = svc.tasks();
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < all.size(); i += 4) svc.record_verdict(Verdict::pass(all[i].task_id));
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(svc.board().global.passed, 80u);
  auto again = InspectionService::recover(ss, assign_tasks(ss, both_two()), tmp.file("none"), tmp.file("v.log"));
  EXPECT_EQ(again.board(), svc.board());
}

TEST(Inspection, ApplyRemovalsHundredMinusFour) {
  auto ss = samples(100);
  auto tasks = assign_tasks(ss, both_two());
  const std::set<std::string> bad{"s7/en-ko", "s7/en-zh", "s20/en-zh", "s55/en-ko", "s99/en-zh"};
  for (auto& t : tasks) {
    t.state = TaskState::kDone;
    t.verdict = bad.count(t.task_id) ? Verdict::error(t.task_id, ErrorReason::kCulturalDifference) : Verdict::pass(t.task_id);
  }
  auto [kept, m] = apply_removals(ss, tasks, "post", "pre");
  EXPECT_EQ(kept.size(), 96u);
  EXPECT_EQ(m.removed_count, 4u);
  EXPECT_EQ(m.parent_manifest, "pre");
  auto [again, m2] = apply_removals(kept, tasks, "post", "pre");
  EXPECT_EQ(again, kept);
  EXPECT_EQ(m2.content_hash, m.content_hash);
}

TEST(Inspection, ApplyRemovalsRefusesPending) {
  auto ss = samples(3);
  auto tasks = assign_tasks(ss, both_two());
  for (std::size_t i = 1; i < tasks.size(); ++i) {
    tasks[i].state = TaskState::kDone;
    tasks[i].verdict = Verdict::pass(tasks[i].task_id);
  }
  auto e = forge_test::error_of([&] { apply_removals(ss, tasks, "x"); });
  EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
  EXPECT_EQ(e.detail().at("pending"), nlohmann::json::array({tasks[0].task_id}));
}

TEST(Inspection, TasksFileRoundTrip) {
  forge_test::TempDir tmp;
  auto tasks = assign_tasks(samples(3), both_two());
  tasks[1].state = TaskState::kDone;
  tasks[1].verdict = Verdict::error(tasks[1].task_id, ErrorReason::kOther, "n");
  write_tasks(tasks, tmp.file("t.jsonl"));
  EXPECT_EQ(read_tasks(tmp.file("t.jsonl")), tasks);
  auto j = tasks[0].to_json();
  j["state"] = "Done";
  EXPECT_EQ(forge_test::kind_of([&] { ReviewTask::from_json(j); }), ErrorKind::kParse);
}

TEST(Preference, MajorityAndTie) {
  PreferenceStore store({pref_item("p1"), pref_item("p2")}, 7);
  auto cast = [&](const std::string& item, const std::string& who, Outcome item_terms) {
    // ballots arrive in presentation terms
    Outcome shown = store.swapped(item) ? eval::mirror(item_terms) : item_terms;
    return store.cast({item, who, shown});
  };
  cast("p1", "h1", Outcome::kAWins);
  cast("p1", "h2", Outcome::kAWins);
  auto st = cast("p1", "h3", Outcome::kBWins);
  EXPECT_EQ(st.ballots, 3u);
  cast("p2", "h1", Outcome::kAWins);
  cast("p2", "h2", Outcome::kTie);
  cast("p2", "h3", Outcome::kBWins);
  auto agg = store.aggregated();
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(agg[0].outcome, Outcome::kAWins);
  EXPECT_EQ(agg[1].outcome, Outcome::kTie);
}

TEST(Preference, DuplicatesFullPanelsAndUnknownItems) {
  PreferenceStore store({pref_item("p1")}, 1);
  store.cast({"p1", "h1", Outcome::kAWins});
  EXPECT_EQ(forge_test::kind_of([&] { store.cast({"p1", "h1", Outcome::kBWins}); }), ErrorKind::kConflict);
  store.cast({"p1", "h2", Outcome::kAWins});
  store.cast({"p1", "h3", Outcome::kAWins});
  EXPECT_EQ(forge_test::kind_of([&] { store.cast({"p1", "h4", Outcome::kAWins}); }), ErrorKind::kConflict);
  EXPECT_EQ(forge_test::kind_of([&] { store.cast({"zz", "h1", Outcome::kAWins}); }), ErrorKind::kNotFound);
}

TEST(Preference, ItemsAreAnonymizedAndFollowPresentationOrder) {
  std::vector<eval::PreferenceItem> items;
  for (int i = 0; i < 20; ++i) items.push_back(pref_item("p" + std::to_string(i)));
  PreferenceStore store(items, 3);
  auto served = store.anonymized_items();
  ASSERT_EQ(served.size(), 20u);
  int swapped = 0;
  for (const auto& j : served) {
    EXPECT_FALSE(j.dump().find("model-x") != std::string::npos);
    const bool s = store.swapped(j["item_id"]);
    swapped += s;
    EXPECT_EQ(j["answer_a"], s ? "beta" : "alpha answer");
  }
  EXPECT_GT(swapped, 0);
  EXPECT_LT(swapped, 20);
  store.cast({"p0", "h1", Outcome::kTie});
  EXPECT_EQ(store.anonymized_items(std::string("h1")).size(), 19u);
}

TEST(Preference, BallotLogReplays) {
  forge_test::TempDir tmp;
  {
    PreferenceStore store({pref_item("p1")}, 5, tmp.file("b.log"));
    store.cast({"p1", "h1", Outcome::kAWins});
    store.cast({"p1", "h2", Outcome::kBWins});
  }
  PreferenceStore again({pref_item("p1")}, 5, tmp.file("b.log"));
  EXPECT_EQ(again.statuses()[0].ballots, 2u);
  EXPECT_EQ(forge_test::kind_of([&] { again.cast({"p1", "h2", Outcome::kTie}); }), ErrorKind::kConflict);
}
