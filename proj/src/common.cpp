#include <cmath>

#include "forge/error.hpp"
#include "forge/types.hpp"

namespace forge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kTimeout: return "timeout";
    case ErrorKind::kRefusal: return "refusal";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

nlohmann::json Error::to_json() const {
  nlohmann::json j;
  j["kind"] = std::string(to_string(kind_));
  j["message"] = what();
  if (!detail_.empty()) j["detail"] = detail_;
  return j;
}

std::string_view to_string(DataKind kind) {
  switch (kind) {
    case DataKind::kObjectCentric: return "object";
    case DataKind::kLocationCentric: return "location";
    case DataKind::kAtmosphereCentric: return "atmosphere";
    case DataKind::kConversation: return "conversation";
  }
  return "unknown";
}

DataKind parse_data_kind(std::string_view s) {
  for (DataKind k : kAllDataKinds) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::kParse, "unknown data kind '" + std::string(s) + "'");
}

std::string_view to_string(Language lang) {
  switch (lang) {
    case Language::kEn: return "en";
    case Language::kKo: return "ko";
    case Language::kZh: return "zh";
  }
  return "unknown";
}

Language parse_language(std::string_view s) {
  for (Language l : kAllLanguages) {
    if (to_string(l) == s) return l;
  }
  throw Error(ErrorKind::kParse, "unknown language '" + std::string(s) + "'");
}

Money Money::from_dollars(double dollars) {
  if (!std::isfinite(dollars) || dollars < 0) {
    throw Error(ErrorKind::kContract, "cost must be a finite non-negative amount");
  }
  return Money(static_cast<std::int64_t>(std::llround(dollars * 1e6)));
}

}  // namespace forge
