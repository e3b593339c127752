#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace forge {

enum class ErrorKind {
  kParse,
  kConflict,
  kContract,
  kPrecondition,
  kSchema,
  kTransport,
  kTimeout,
  kRefusal,
  kNotFound,
  kConfig,
  kValidation,
  kFormat,
  kRange,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Every failure the library reports is a forge::Error. `detail` carries
// machine-readable context (offending index, report, billed attempts, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        nlohmann::json detail = nlohmann::json::object())
      : std::runtime_error(message), kind_(kind), detail_(std::move(detail)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const nlohmann::json& detail() const noexcept { return detail_; }

  nlohmann::json to_json() const;

 private:
  ErrorKind kind_;
  nlohmann::json detail_;
};

}  // namespace forge
