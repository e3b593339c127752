#include <gtest/gtest.h>

#include "forge/promptgen.hpp"
#include "test_util.hpp"

using namespace forge;
using namespace forge::promptgen;

namespace {

const std::map<DataKind, PromptTemplate>& shipped() {
  static const auto t = load_template_dir(forge_test::source_path("templates"));
  return t;
}

corpus::ImageRecord cat_image() {
  corpus::ImageRecord r;
  r.image_id = "im_1";
  r.object_names = {"cat", "sofa", "lamp"};
  return r;
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

const char* kMinimal =
    "---\nkind: object\n---\n=== system ===\nsys\n=== instruction ===\nobjs {{objects}} in {{languages}}\n"
    "=== seed ===\nfirst\n=== seed ===\nsecond\n";

}  // namespace

TEST(Promptgen, ShippedTemplatesLoad) {
  ASSERT_EQ(shipped().size(), 4u);
  EXPECT_EQ(shipped().at(DataKind::kConversation).required_turns, 8);
  EXPECT_FALSE(shipped().at(DataKind::kObjectCentric).required_turns.has_value());
  for (const auto& [k, t] : shipped()) EXPECT_EQ(t.seed_examples.size(), 2u);
}

TEST(Promptgen, ObjectPromptContainsObjectsAndBothSeeds) {
  const auto& t = shipped().at(DataKind::kObjectCentric);
  auto req = build_prompt(cat_image(), DataKind::kObjectCentric, t);
  for (const char* o : {"cat", "sofa", "lamp"}) EXPECT_NE(req.rendered_prompt.find(o), std::string::npos);
  EXPECT_EQ(count_of(req.rendered_prompt, "Seed example "), 2u);
  for (const auto& s : t.seed_examples) EXPECT_NE(req.rendered_prompt.find(s), std::string::npos);
  for (const char* l : {"English", "Korean", "Chinese"}) EXPECT_NE(req.rendered_prompt.find(l), std::string::npos);
  EXPECT_EQ(req.template_hash, t.content_hash);
  EXPECT_EQ(req.request_id(), "im_1#object");
}

TEST(Promptgen, ConversationPromptDemandsEightTurns) {
  auto req = build_prompt(cat_image(), DataKind::kConversation, shipped().at(DataKind::kConversation));
  EXPECT_NE(req.rendered_prompt.find("Write exactly 8 pairs of dialogue"), std::string::npos);
}

TEST(Promptgen, RenderingIsDeterministic) {
  for (auto k : kAllDataKinds) {
    auto a = build_prompt(cat_image(), k, shipped().at(k));
    auto b = build_prompt(cat_image(), k, shipped().at(k));
    EXPECT_EQ(a.rendered_prompt, b.rendered_prompt);
  }
}

TEST(Promptgen, LocationPreambleIsPrefixAndGraphFirst) {
  const auto& t = shipped().at(DataKind::kLocationCentric);
  auto pre = location_prompt_preamble(t);
  auto g = pre.find("graph");
  auto qa = pre.find("question-answer");
  ASSERT_NE(g, std::string::npos);
  ASSERT_NE(qa, std::string::npos);
  EXPECT_LT(g, qa);
  auto req = build_prompt(cat_image(), DataKind::kLocationCentric, t);
  EXPECT_EQ(req.rendered_prompt.rfind(pre, 0), 0u);
}

TEST(Promptgen, PreambleRejectsOtherKinds) {
  EXPECT_EQ(forge_test::kind_of([] { location_prompt_preamble(shipped().at(DataKind::kObjectCentric)); }),
            ErrorKind::kContract);
}

TEST(Promptgen, KindMismatchAndEmptyObjects) {
  EXPECT_EQ(forge_test::kind_of([] {
              build_prompt(cat_image(), DataKind::kAtmosphereCentric, shipped().at(DataKind::kObjectCentric));
            }),
            ErrorKind::kContract);
  auto img = cat_image();
  img.object_names.clear();
  EXPECT_EQ(forge_test::kind_of([&] { build_prompt(img, DataKind::kObjectCentric, shipped().at(DataKind::kObjectCentric)); }),
            ErrorKind::kPrecondition);
  EXPECT_EQ(forge_test::kind_of([] {
              build_prompt(cat_image(), DataKind::kObjectCentric, shipped().at(DataKind::kObjectCentric),
                           {Language::kEn, Language::kEn});
            }),
            ErrorKind::kPrecondition);
}

TEST(Promptgen, TemplateLoadRejectsBadShapes) {
  EXPECT_NO_THROW(parse_template(kMinimal));
  std::string one_seed = kMinimal;
  one_seed = one_seed.substr(0, one_seed.find("=== seed ===\nsecond"));
  EXPECT_EQ(forge_test::kind_of([&] { parse_template(one_seed); }), ErrorKind::kParse);

  std::string unknown = kMinimal;
  unknown.replace(unknown.find("sys\n"), 4, "sys {{colour}}\n");
  EXPECT_EQ(forge_test::kind_of([&] { parse_template(unknown); }), ErrorKind::kParse);

  std::string no_langs = kMinimal;
  no_langs.replace(no_langs.find(" in {{languages}}"), 17, "");
  EXPECT_EQ(forge_test::kind_of([&] { parse_template(no_langs); }), ErrorKind::kParse);

  std::string conv = kMinimal;
  conv.replace(conv.find("object"), 6, "conversation");
  EXPECT_EQ(forge_test::kind_of([&] { parse_template(conv); }), ErrorKind::kParse);  // lacks required_turns
  conv.replace(conv.find("conversation\n"), 13, "conversation\nrequired_turns: 8\n");
  EXPECT_NO_THROW(parse_template(conv));
}

TEST(Promptgen, HashChangesWithSource) {
  std::string other = kMinimal;
  other.replace(other.find("first"), 5, "FIRST");
  EXPECT_NE(parse_template(kMinimal).content_hash, parse_template(other).content_hash);
}
