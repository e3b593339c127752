#include "forge/promptgen.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "forge/dataset.hpp"
#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::promptgen {
namespace {

const std::set<std::string>& known_placeholders() {
  static const std::set<std::string> k = {"objects", "languages", "turns"};
  return k;
}

std::vector<std::string> placeholders_in(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = s.find("{{", pos)) != std::string::npos) {
    auto end = s.find("}}", pos + 2);
    if (end == std::string::npos) {
      throw Error(ErrorKind::kParse, "unterminated placeholder at byte " + std::to_string(pos));
    }
    out.push_back(std::string(text::trim(std::string_view(s).substr(pos + 2, end - pos - 2))));
    pos = end + 2;
  }
  return out;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string language_name(Language l) {
  switch (l) {
    case Language::kEn: return "English (en)";
    case Language::kKo: return "Korean (ko)";
    case Language::kZh: return "Chinese (zh)";
  }
  return "?";
}

std::string strip_block(const std::string& s) {
  return std::string(text::trim(s));
}

}  // namespace

void PromptTemplate::validate() const {
  if (seed_examples.size() != 2) {
    throw Error(ErrorKind::kParse,
                "template needs exactly 2 seed examples, found " + std::to_string(seed_examples.size()));
  }
  if (kind == DataKind::kConversation) {
    if (required_turns != dataset::kConversationTurns) {
      throw Error(ErrorKind::kParse, "conversation template must declare required_turns: 8");
    }
  } else if (required_turns) {
    throw Error(ErrorKind::kParse, "required_turns is only valid for conversation templates");
  }
  for (const std::string* part : {&system_message, &instruction_body}) {
    for (const auto& p : placeholders_in(*part)) {
      if (!known_placeholders().contains(p)) {
        throw Error(ErrorKind::kParse, "unknown placeholder {{" + p + "}}");
      }
    }
  }
  for (const auto& seed : seed_examples) {
    for (const auto& p : placeholders_in(seed)) {
      if (!known_placeholders().contains(p)) throw Error(ErrorKind::kParse, "unknown placeholder {{" + p + "}}");
    }
  }
  auto ph = placeholders_in(instruction_body);
  for (const char* need : {"objects", "languages"}) {
    if (std::find(ph.begin(), ph.end(), need) == ph.end()) {
      throw Error(ErrorKind::kParse, std::string("instruction body lacks {{") + need + "}}");
    }
  }
}

PromptTemplate parse_template(const std::string& source) {
  PromptTemplate t;
  t.content_hash = text::hex64(text::fnv1a64(source));

  std::istringstream in(source);
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "---") {
    throw Error(ErrorKind::kParse, "template must start with a '---' front-matter fence");
  }
  bool have_kind = false;
  bool closed = false;
  while (std::getline(in, line)) {
    auto l = text::trim(line);
    if (l == "---") {
      closed = true;
      break;
    }
    if (l.empty() || l.front() == '#') continue;
    auto colon = l.find(':');
    if (colon == std::string_view::npos) throw Error(ErrorKind::kParse, "bad front-matter line: " + line);
    auto key = text::trim(l.substr(0, colon));
    auto value = std::string(text::trim(l.substr(colon + 1)));
    if (key == "kind") {
      t.kind = parse_data_kind(value);
      have_kind = true;
    } else if (key == "required_turns") {
      try {
        t.required_turns = std::stoi(value);
      } catch (const std::exception&) {
        throw Error(ErrorKind::kParse, "required_turns must be an integer");
      }
    } else {
      throw Error(ErrorKind::kParse, "unknown front-matter key '" + std::string(key) + "'");
    }
  }
  if (!closed) throw Error(ErrorKind::kParse, "unterminated front matter");
  if (!have_kind) throw Error(ErrorKind::kParse, "front matter lacks 'kind'");

  enum class Section { kNone, kSystem, kInstruction, kSeed } section = Section::kNone;
  std::string buf;
  bool have_system = false, have_instruction = false;
  auto flush = [&] {
    switch (section) {
      case Section::kSystem: t.system_message = strip_block(buf); break;
      case Section::kInstruction: t.instruction_body = strip_block(buf); break;
      case Section::kSeed: t.seed_examples.push_back(strip_block(buf)); break;
      case Section::kNone:
        if (!text::trim(buf).empty()) throw Error(ErrorKind::kParse, "text outside any section");
        break;
    }
    buf.clear();
  };
  while (std::getline(in, line)) {
    auto l = text::trim(line);
    if (l.starts_with("===") && l.ends_with("===") && l.size() > 6) {
      flush();
      auto name = text::trim(l.substr(3, l.size() - 6));
      if (name == "system") {
        section = Section::kSystem;
        have_system = true;
      } else if (name == "instruction") {
        section = Section::kInstruction;
        have_instruction = true;
      } else if (name == "seed") {
        section = Section::kSeed;
      } else {
        throw Error(ErrorKind::kParse, "unknown section '" + std::string(name) + "'");
      }
      continue;
    }
    buf += line;
    buf += '\n';
  }
  flush();
  if (!have_system || !have_instruction) {
    throw Error(ErrorKind::kParse, "template needs both 'system' and 'instruction' sections");
  }
  t.validate();
  return t;
}

PromptTemplate load_template(const std::string& path) {
  try {
    return parse_template(text::read_file(path));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kParse) throw;
    throw Error(ErrorKind::kParse, path + ": " + e.what(), {{"path", path}});
  }
}

std::map<DataKind, PromptTemplate> load_template_dir(const std::string& dir) {
  std::map<DataKind, PromptTemplate> out;
  for (DataKind k : kAllDataKinds) {
    auto path = (std::filesystem::path(dir) / (std::string(to_string(k)) + ".tmpl")).string();
    PromptTemplate t = load_template(path);
    if (t.kind != k) {
      throw Error(ErrorKind::kContract, path + " declares kind '" + std::string(to_string(t.kind)) + "'");
    }
    out.emplace(k, std::move(t));
  }
  return out;
}

std::string GenerationRequest::request_id() const {
  return image.image_id + "#" + std::string(to_string(kind));
}

std::string location_prompt_preamble(const PromptTemplate& tmpl) {
  if (tmpl.kind != DataKind::kLocationCentric) {
    throw Error(ErrorKind::kContract, "scene-graph preamble requested for a '" +
                                          std::string(to_string(tmpl.kind)) + "' template");
  }
  return "Step 1: before writing any questions, build a scene graph of the image. List every "
         "relationship between the main objects as `subject | relation | object` lines inside a "
         "```graph fenced block.\n"
         "Step 2: only after the scene graph is complete, write the question-answer pairs about "
         "where objects are located, using the relationships in the graph.\n";
}

std::string response_format_instructions(DataKind kind, const std::vector<Language>& languages) {
  std::vector<std::string> codes;
  for (Language l : languages) codes.emplace_back(to_string(l));
  const int turns = dataset::expected_turns(kind);
  std::ostringstream os;
  os << "Response format: for every turn and every language, emit one fenced block opened by "
        "a line \"```qa lang=<code> turn=<n>\" and closed by a line \"```\". Inside the block "
        "write \"Q: <question>\" then \"A: <answer>\". Language codes: "
     << text::join(codes, ", ") << ". Turns are numbered from 1 to " << turns << ".\n";
  return os.str();
}

GenerationRequest build_prompt(const corpus::ImageRecord& image, DataKind kind,
                               const PromptTemplate& tmpl, const std::vector<Language>& languages) {
  if (tmpl.kind != kind) {
    throw Error(ErrorKind::kContract, "template kind '" + std::string(to_string(tmpl.kind)) +
                                          "' does not match requested kind '" +
                                          std::string(to_string(kind)) + "'");
  }
  if (image.object_names.empty()) {
    throw Error(ErrorKind::kPrecondition, "image '" + image.image_id + "' has no main objects");
  }
  if (languages.empty()) throw Error(ErrorKind::kPrecondition, "language list is empty");
  std::set<Language> uniq(languages.begin(), languages.end());
  if (uniq.size() != languages.size()) throw Error(ErrorKind::kPrecondition, "duplicate language in list");

  std::vector<std::string> lang_names;
  for (Language l : languages) lang_names.push_back(language_name(l));
  const std::string objects = text::join(image.object_names, ", ");
  const std::string langs = text::join(lang_names, ", ");
  const std::string turns = std::to_string(dataset::expected_turns(kind));
  auto fill = [&](std::string s) {
    s = replace_all(std::move(s), "{{objects}}", objects);
    s = replace_all(std::move(s), "{{languages}}", langs);
    return replace_all(std::move(s), "{{turns}}", turns);
  };

  std::ostringstream os;
  if (kind == DataKind::kLocationCentric) os << location_prompt_preamble(tmpl) << '\n';
  os << fill(tmpl.system_message) << "\n\n";
  os << "Main objects: " << objects << "\n";
  os << "Languages: " << langs << "\n\n";
  os << fill(tmpl.instruction_body) << "\n\n";
  for (std::size_t i = 0; i < tmpl.seed_examples.size(); ++i) {
    os << "Seed example " << (i + 1) << ":\n" << fill(tmpl.seed_examples[i]) << "\n\n";
  }
  if (tmpl.required_turns) {
    os << "Write exactly " << *tmpl.required_turns
       << " pairs of dialogue (" << *tmpl.required_turns
       << " question-answer turns) for this image, in a multi-turn format.\n";
  }
  os << response_format_instructions(kind, languages);

  GenerationRequest req;
  req.image = image;
  req.kind = kind;
  req.languages = languages;
  req.rendered_prompt = os.str();
  req.template_hash = tmpl.content_hash;
  return req;
}

}  // namespace forge::promptgen
