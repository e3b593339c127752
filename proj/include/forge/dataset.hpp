#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "forge/types.hpp"
#include "json.hpp"

namespace forge::dataset {

inline constexpr int kConversationTurns = 8;

int expected_turns(DataKind kind);

struct QAPair {
  Language language = Language::kEn;
  std::string question;
  std::string answer;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

struct Turn {
  int index = 1;
  std::map<Language, QAPair> pairs;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Provenance {
  std::string template_hash;
  std::string model_name;
  std::string timestamp;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Sample {
  std::string sample_id;
  std::string image_id;
  DataKind kind = DataKind::kObjectCentric;
  std::vector<Language> languages;
  std::vector<Turn> turns;
  Provenance provenance;

  std::size_t pair_count() const { return turns.size() * languages.size(); }

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Violation {
  int turn = 0;  // 0 = sample-level
  std::optional<Language> language;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::string sample_id;
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  nlohmann::json to_json() const;
};

ValidationReport validate_sample(const Sample& s);

struct DatasetManifest {
  std::string name;
  std::size_t sample_count = 0;
  std::size_t pair_count = 0;
  std::map<DataKind, std::size_t> per_kind;
  std::size_t removed_count = 0;
  std::optional<std::string> parent_manifest;
  std::optional<std::uint64_t> seed;
  std::string content_hash;  // fnv1a64 of the canonical JSONL bytes

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// Counts are always recomputed from the samples.
DatasetManifest compute_manifest(const std::vector<Sample>& samples, std::string name);

nlohmann::json to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

// Canonical single-line form: sorted keys, UTF-8, no floats.
std::string canonical_line(const Sample& s);
std::string to_jsonl(const std::vector<Sample>& samples);

// Refuses to write if any sample is invalid (kValidation, detail = report).
DatasetManifest export_jsonl(const std::vector<Sample>& samples, const std::string& path,
                             std::string name);
std::vector<Sample> import_jsonl(std::istream& in);
std::vector<Sample> import_jsonl(const std::string& path);

void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

std::pair<std::vector<Sample>, DatasetManifest> derive_subset(
    const std::vector<Sample>& samples, const std::set<std::string>& removals, std::string name,
    std::optional<std::string> parent = std::nullopt);

}  // namespace forge::dataset
