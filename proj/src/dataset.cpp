#include "forge/dataset.hpp"

#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::dataset {

using nlohmann::json;

int expected_turns(DataKind kind) {
  return kind == DataKind::kConversation ? kConversationTurns : 1;
}

json ValidationReport::to_json() const {
  json v = json::array();
  for (const auto& x : violations) {
    json e = {{"turn", x.turn}, {"message", x.message}};
    if (x.language) e["language"] = std::string(forge::to_string(*x.language));
    v.push_back(std::move(e));
  }
  return {{"sample_id", sample_id}, {"violations", std::move(v)}};
}

ValidationReport validate_sample(const Sample& s) {
  ValidationReport r;
  r.sample_id = s.sample_id;
  auto add = [&](int turn, std::optional<Language> lang, std::string msg) {
    r.violations.push_back({turn, lang, std::move(msg)});
  };

  if (s.sample_id.empty()) add(0, std::nullopt, "empty sample_id");
  if (s.image_id.empty()) add(0, std::nullopt, "empty image_id");
  if (s.languages.empty()) add(0, std::nullopt, "empty language set");
  std::set<Language> langs(s.languages.begin(), s.languages.end());
  if (langs.size() != s.languages.size()) add(0, std::nullopt, "duplicate language in language set");

  const int want = expected_turns(s.kind);
  const int have = static_cast<int>(s.turns.size());
  if (have != want) {
    add(0, std::nullopt,
        "turns=" + std::to_string(have) + ", expected " + std::to_string(want));
  }

  for (std::size_t i = 0; i < s.turns.size(); ++i) {
    const Turn& t = s.turns[i];
    const int expected_index = static_cast<int>(i) + 1;
    if (t.index != expected_index) {
      add(expected_index, std::nullopt,
          "turn index " + std::to_string(t.index) + ", expected " + std::to_string(expected_index));
    }
    for (Language l : s.languages) {
      auto it = t.pairs.find(l);
      if (it == t.pairs.end()) {
        add(expected_index, l, "turn " + std::to_string(expected_index) + " missing " +
                                   std::string(to_string(l)) + " pair");
        continue;
      }
      if (it->second.language != l) {
        add(expected_index, l, "pair language tag disagrees with its key");
      }
      if (text::trim(it->second.question).empty()) add(expected_index, l, "empty question");
      if (text::trim(it->second.answer).empty()) add(expected_index, l, "empty answer");
    }
    for (const auto& [l, _] : t.pairs) {
      if (!langs.contains(l)) {
        add(expected_index, l, "pair for language outside the sample's language set");
      }
    }
  }
  return r;
}

DatasetManifest compute_manifest(const std::vector<Sample>& samples, std::string name) {
  DatasetManifest m;
  m.name = std::move(name);
  m.sample_count = samples.size();
  for (DataKind k : kAllDataKinds) m.per_kind[k] = 0;
  for (const auto& s : samples) {
    m.pair_count += s.pair_count();
    ++m.per_kind[s.kind];
  }
  m.content_hash = text::hex64(text::fnv1a64(to_jsonl(samples)));
  return m;
}

json to_json(const Sample& s) {
  json langs = json::array();
  for (Language l : s.languages) langs.push_back(std::string(to_string(l)));
  json turns = json::array();
  for (const auto& t : s.turns) {
    json pairs = json::object();
    for (const auto& [l, p] : t.pairs) {
      pairs[std::string(to_string(l))] = {{"question", p.question}, {"answer", p.answer}};
    }
    turns.push_back({{"index", t.index}, {"pairs", std::move(pairs)}});
  }
  return {{"sample_id", s.sample_id},
          {"image_id", s.image_id},
          {"kind", std::string(to_string(s.kind))},
          {"languages", std::move(langs)},
          {"turns", std::move(turns)},
          {"provenance",
           {{"template_hash", s.provenance.template_hash},
            {"model_name", s.provenance.model_name},
            {"timestamp", s.provenance.timestamp}}}};
}

Sample sample_from_json(const json& j) {
  try {
    Sample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.image_id = j.at("image_id").get<std::string>();
    s.kind = parse_data_kind(j.at("kind").get<std::string>());
    for (const auto& l : j.at("languages")) s.languages.push_back(parse_language(l.get<std::string>()));
    for (const auto& tj : j.at("turns")) {
      Turn t;
      t.index = tj.at("index").get<int>();
      for (const auto& [key, pj] : tj.at("pairs").items()) {
        Language l = parse_language(key);
        t.pairs[l] = QAPair{l, pj.at("question").get<std::string>(), pj.at("answer").get<std::string>()};
      }
      s.turns.push_back(std::move(t));
    }
    const auto& p = j.at("provenance");
    s.provenance = {p.at("template_hash").get<std::string>(), p.at("model_name").get<std::string>(),
                    p.at("timestamp").get<std::string>()};
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed sample: ") + e.what());
  }
}

json to_json(const DatasetManifest& m) {
  json per_kind = json::object();
  for (const auto& [k, n] : m.per_kind) per_kind[std::string(to_string(k))] = n;
  json j = {{"name", m.name},
            {"sample_count", m.sample_count},
            {"pair_count", m.pair_count},
            {"per_kind", std::move(per_kind)},
            {"removed_count", m.removed_count},
            {"content_hash", m.content_hash},
            {"parent_manifest", nullptr},
            {"seed", nullptr}};
  if (m.parent_manifest) j["parent_manifest"] = *m.parent_manifest;
  if (m.seed) j["seed"] = *m.seed;
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  try {
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.sample_count = j.at("sample_count").get<std::size_t>();
    m.pair_count = j.at("pair_count").get<std::size_t>();
    for (const auto& [k, n] : j.at("per_kind").items()) m.per_kind[parse_data_kind(k)] = n.get<std::size_t>();
    m.removed_count = j.at("removed_count").get<std::size_t>();
    m.content_hash = j.at("content_hash").get<std::string>();
    if (!j.at("parent_manifest").is_null()) m.parent_manifest = j["parent_manifest"].get<std::string>();
    if (!j.at("seed").is_null()) m.seed = j["seed"].get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed manifest: ") + e.what());
  }
}

std::string canonical_line(const Sample& s) { return to_json(s).dump(); }

std::string to_jsonl(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += canonical_line(s);
    out += '\n';
  }
  return out;
}

DatasetManifest export_jsonl(const std::vector<Sample>& samples, const std::string& path,
                             std::string name) {
  for (const auto& s : samples) {
    auto report = validate_sample(s);
    if (!report.valid()) {
      throw Error(ErrorKind::kValidation,
                  "refusing to export invalid sample '" + s.sample_id + "': " +
                      report.violations.front().message,
                  report.to_json());
    }
  }
  text::write_file(path, to_jsonl(samples));
  return compute_manifest(samples, std::move(name));
}

std::vector<Sample> import_jsonl(std::istream& in) {
  std::vector<Sample> out;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kParse, "corrupt sample at line " + std::to_string(line_no) + ": " + e.what(),
                  {{"line", line_no}});
    }
  }
  return out;
}

std::vector<Sample> import_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open dataset '" + path + "'", {{"path", path}});
  return import_jsonl(in);
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  text::write_file(path, to_json(m).dump(2) + "\n");
}

DatasetManifest read_manifest(const std::string& path) {
  try {
    return manifest_from_json(json::parse(text::read_file(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, "manifest '" + path + "': " + e.what());
  }
}

std::pair<std::vector<Sample>, DatasetManifest> derive_subset(const std::vector<Sample>& samples,
                                                              const std::set<std::string>& removals,
                                                              std::string name,
                                                              std::optional<std::string> parent) {
  std::unordered_set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.sample_id);
  for (const auto& r : removals) {
    if (!ids.contains(r)) {
      throw Error(ErrorKind::kNotFound, "removal id '" + r + "' is not in the dataset", {{"sample_id", r}});
    }
  }
  std::vector<Sample> kept;
  kept.reserve(samples.size() - removals.size());
  for (const auto& s : samples) {
    if (!removals.contains(s.sample_id)) kept.push_back(s);
  }
  DatasetManifest m = compute_manifest(kept, std::move(name));
  m.removed_count = removals.size();
  m.parent_manifest = parent ? std::move(parent) : std::optional<std::string>("(unnamed parent)");
  return {std::move(kept), std::move(m)};
}

}  // namespace forge::dataset
