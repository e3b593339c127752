#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace forge::corpus {

struct ImageRecord {
  std::string image_id;
  std::vector<std::string> object_names;  // trimmed, empties dropped, duplicates kept
  std::string source;
  std::string uri;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct SelectionCriteria {
  int min_objects = 3;
  int max_objects = 10;

  void validate() const;
};

// Reads line-delimited records `{"image_id", "objects", "uri"}`. Blank lines
// are skipped but still advance the record index reported in errors.
std::vector<ImageRecord> ingest_catalog(std::istream& in, const std::string& source = "catalog");
std::vector<ImageRecord> ingest_catalog_file(const std::string& path);

// Order-preserving filter on min_objects <= |object_names| <= max_objects.
std::vector<ImageRecord> select_images(const std::vector<ImageRecord>& catalog,
                                       const SelectionCriteria& criteria);

void write_catalog(std::ostream& out, const std::vector<ImageRecord>& records);

}  // namespace forge::corpus
