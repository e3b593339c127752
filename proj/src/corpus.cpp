#include "forge/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/text.hpp"
#include "json.hpp"

namespace forge::corpus {
namespace {

using nlohmann::json;

[[noreturn]] void bad_record(std::size_t index, const std::string& why) {
  throw Error(ErrorKind::kParse, "malformed catalog record " + std::to_string(index) + ": " + why,
              {{"record_index", index}});
}

ImageRecord parse_record(const std::string& line, std::size_t index, const std::string& source) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    bad_record(index, e.what());
  }
  if (!j.is_object()) bad_record(index, "not a JSON object");
  auto id = j.find("image_id");
  if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
    bad_record(index, "missing or empty image_id");
  }
  auto objs = j.find("objects");
  if (objs == j.end() || !objs->is_array()) bad_record(index, "missing objects array");

  ImageRecord rec;
  rec.image_id = id->get<std::string>();
  rec.source = source;
  for (const auto& o : *objs) {
    if (!o.is_string()) bad_record(index, "object names must be strings");
    auto name = text::trim(o.get_ref<const std::string&>());
    if (!name.empty()) rec.object_names.emplace_back(name);
  }
  if (auto uri = j.find("uri"); uri != j.end()) {
    if (!uri->is_string()) bad_record(index, "uri must be a string");
    rec.uri = uri->get<std::string>();
  }
  return rec;
}

}  // namespace

void SelectionCriteria::validate() const {
  if (min_objects < 1 || min_objects > max_objects) {
    throw Error(ErrorKind::kContract,
                "selection criteria need 1 <= min_objects <= max_objects (got " +
                    std::to_string(min_objects) + ", " + std::to_string(max_objects) + ")");
  }
}

std::vector<ImageRecord> ingest_catalog(std::istream& in, const std::string& source) {
  std::vector<ImageRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t index = 0;
  for (; std::getline(in, line); ++index) {
    if (text::trim(line).empty()) continue;
    ImageRecord rec = parse_record(line, index, source);
    if (!seen.insert(rec.image_id).second) {
      throw Error(ErrorKind::kConflict, "duplicate image_id '" + rec.image_id + "'",
                  {{"record_index", index}, {"image_id", rec.image_id}});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ImageRecord> ingest_catalog_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open catalog '" + path + "'", {{"path", path}});
  return ingest_catalog(in, path);
}

std::vector<ImageRecord> select_images(const std::vector<ImageRecord>& catalog,
                                       const SelectionCriteria& criteria) {
  criteria.validate();
  std::vector<ImageRecord> out;
  for (const auto& rec : catalog) {
    auto n = static_cast<long>(rec.object_names.size());
    if (n >= criteria.min_objects && n <= criteria.max_objects) out.push_back(rec);
  }
  return out;
}

void write_catalog(std::ostream& out, const std::vector<ImageRecord>& records) {
  for (const auto& r : records) {
    json j = {{"image_id", r.image_id}, {"objects", r.object_names}, {"uri", r.uri}};
    out << j.dump() << '\n';
  }
}

}  // namespace forge::corpus
