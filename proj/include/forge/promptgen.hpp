#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/types.hpp"

namespace forge::promptgen {

// Template file layout (UTF-8):
//
//   ---
//   kind: conversation
//   required_turns: 8
//   ---
//   === system ===
//   ...
//   === instruction ===
//   ... {{objects}} ... {{languages}} ...
//   === seed ===
//   ...
//   === seed ===
//   ...
//
// Placeholders are {{objects}}, {{languages}} and {{turns}}; anything else
// is rejected at load time.
struct PromptTemplate {
  DataKind kind = DataKind::kObjectCentric;
  std::string system_message;
  std::string instruction_body;
  std::vector<std::string> seed_examples;
  std::optional<int> required_turns;
  std::string content_hash;  // fnv1a64 of the source bytes

  void validate() const;
};

PromptTemplate parse_template(const std::string& source);
PromptTemplate load_template(const std::string& path);

// Loads <dir>/{object,location,atmosphere,conversation}.tmpl.
std::map<DataKind, PromptTemplate> load_template_dir(const std::string& dir);

struct GenerationRequest {
  corpus::ImageRecord image;
  DataKind kind = DataKind::kObjectCentric;
  std::vector<Language> languages{Language::kEn, Language::kKo, Language::kZh};
  std::string rendered_prompt;
  std::string template_hash;

  // "<image_id>#<kind>"
  std::string request_id() const;
};

std::string location_prompt_preamble(const PromptTemplate& tmpl);

// The block grammar the backend must answer in; shared with the parser.
std::string response_format_instructions(DataKind kind, const std::vector<Language>& languages);

GenerationRequest build_prompt(const corpus::ImageRecord& image, DataKind kind,
                               const PromptTemplate& tmpl,
                               const std::vector<Language>& languages = {
                                   Language::kEn, Language::kKo, Language::kZh});

}  // namespace forge::promptgen
