#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "forge/genclient.hpp"
#include "json.hpp"

namespace forge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Shared configuration file. Relative paths resolve against the directory
// holding the config file.
struct ForgeConfig {
  std::optional<std::string> catalog;
  std::optional<std::string> templates;
  std::optional<std::string> output_dir;
  genclient::BackendConfig backend;
  std::optional<std::string> normalization_rules;
  int service_port = 8080;
  std::uint64_t seed = 0;

  // Throws kConfig on unknown keys or missing referenced paths.
  static ForgeConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static ForgeConfig load(const std::string& path);
};

// Runs the command line. Errors print as JSON on `err`; exit codes are
// 0 ok, 1 runtime failure, 2 usage.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace forge::cli
