#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "forge/trainplan.hpp"
#include "test_util.hpp"

using namespace forge;
using namespace forge::trainplan;

TEST(Trainplan, DefaultsMatchPublishedHyperparameters) {
  auto c = emit_config();
  EXPECT_EQ(c.dropout, 0.05);
  EXPECT_EQ(c.learning_rate, 5e-5);
  EXPECT_EQ(c.optimizer, "AdamW");
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.99);
  EXPECT_EQ(c.epochs_vqa, 1);
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.lora_rank, 8);
  EXPECT_EQ(c.lora_alpha, 32);
  EXPECT_EQ(c.lora_trainable,
            (std::vector<std::string>{"q_proj", "v_proj", "k_proj", "o_proj", "gate_proj", "down_proj", "up_proj"}));
  EXPECT_EQ(c.lora_layers, (std::vector<std::string>{"q", "k", "v"}));
  EXPECT_EQ(c.random_seed, 42);
}

TEST(Trainplan, CanonicalOutputIsByteStable) {
  const auto j = to_canonical_json(emit_config());
  EXPECT_EQ(j, to_canonical_json(emit_config()));
  EXPECT_EQ(j,
            R"({"batch_size":8,"beta1":0.9,"beta2":0.99,"dropout":0.05,"epochs_vqa":1,"learning_rate":5e-05,)"
            R"("lora_alpha":32,"lora_layers":["q","k","v"],"lora_rank":8,"lora_trainable":["q_proj","v_proj",)"
            R"("k_proj","o_proj","gate_proj","down_proj","up_proj"],"optimizer":"AdamW","random_seed":42})");
  EXPECT_EQ(parse_config(j), emit_config());
  auto kv = to_key_value(emit_config());
  EXPECT_NE(kv.find("learning_rate=5e-05\n"), std::string::npos);
  EXPECT_NE(kv.find("lora_layers=q,k,v\n"), std::string::npos);
}

TEST(Trainplan, OverrideIsolation) {
  auto base = emit_config();
  auto c = emit_config({{"batch_size", 16}});
  EXPECT_EQ(c.batch_size, 16);
  c.batch_size = base.batch_size;
  EXPECT_EQ(c, base);
}

TEST(Trainplan, UnknownKeySuggestsNearest) {
  auto e = forge_test::error_of([] { emit_config({{"lr", 1e-4}}); });
  EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  EXPECT_EQ(e.detail().at("suggestion"), "learning_rate");
  EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  // the published table's typo maps to the real field
  EXPECT_EQ(forge_test::error_of([] { emit_config({{"ora_alpha", 16}}); }).detail().at("suggestion"), "lora_alpha");
}

TEST(Trainplan, BadValues) {
  EXPECT_EQ(forge_test::kind_of([] { emit_config({{"batch_size", 0}}); }), ErrorKind::kConfig);
  EXPECT_EQ(forge_test::kind_of([] { emit_config({{"batch_size", "eight"}}); }), ErrorKind::kConfig);
  EXPECT_EQ(forge_test::kind_of([] { emit_config({{"beta2", 1.0}}); }), ErrorKind::kConfig);
  EXPECT_EQ(forge_test::kind_of([] { parse_config(R"({"dropout":0.1})"); }), ErrorKind::kParse);
}

TEST(Trainplan, OverrideArgs) {
  nlohmann::json o = nlohmann::json::object();
  apply_override_arg(o, "batch_size=16");
  apply_override_arg(o, "optimizer=SGD");
  apply_override_arg(o, "lora_layers=[\"q\"]");
  EXPECT_EQ(o["batch_size"], 16);
  EXPECT_EQ(o["optimizer"], "SGD");
  EXPECT_EQ(emit_config(o).lora_layers, std::vector<std::string>{"q"});
  EXPECT_EQ(forge_test::kind_of([&] { apply_override_arg(o, "novalue"); }), ErrorKind::kConfig);
}

TEST(Trainplan, ReferenceDurationsSumTo189AndFlagPrinted) {
  auto phases = reference_phases();
  ASSERT_EQ(phases.size(), 3u);
  EXPECT_EQ(phases[0].hours, 96.6);
  EXPECT_EQ(phases[1].hours, 28.4);
  EXPECT_EQ(phases[2].hours, 64.1);
  auto s = sum_durations(phases, kReferencePrintedTotalHours);
  EXPECT_NEAR(s.total_hours, 189.1, 1e-9);
  EXPECT_FALSE(s.printed_total_consistent);
  EXPECT_EQ(s.to_json()["total_hours"], 189.1);
  EXPECT_TRUE(sum_durations(phases, 189.1).printed_total_consistent);
}

TEST(Trainplan, DurationEdgeCases) {
  EXPECT_EQ(sum_durations({}).total_hours, 0.0);
  EXPECT_EQ(sum_durations({{"x", 24.0}}).total_days, 1.0);
  EXPECT_EQ(forge_test::kind_of([] { sum_durations({{"x", -1}}); }), ErrorKind::kRange);
}

TEST(TrainplanProperty, DurationSumOrderInvariant) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> h(0, 200);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PhaseDuration> p;
    for (int i = 0, n = rng() % 12; i < n; ++i) p.push_back({"p" + std::to_string(i), h(rng)});
    const double a = sum_durations(p).total_hours;
    std::shuffle(p.begin(), p.end(), rng);
    EXPECT_NEAR(sum_durations(p).total_hours, a, 1e-9);
  }
}

TEST(TrainplanProperty, RoundTripUnderRandomOverrides) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    nlohmann::json o{{"batch_size", 1 + static_cast<int>(rng() % 64)},
                     {"learning_rate", (1 + rng() % 100) * 1e-6},
                     {"random_seed", static_cast<int>(rng() % 1000)}};
    auto c = emit_config(o);
    EXPECT_EQ(parse_config(to_canonical_json(c)), c);
  }
}
