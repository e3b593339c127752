#pragma once

#include <chrono>
#include <string>

namespace forge {

// Client half of the backend contract shared by generation and judging:
//   POST <endpoint>  {"model": ..., "prompt": ..., "image": <base64>, "image_url": ...}
//   200 -> {"text": ...}
//   4xx with {"refusal"|"error": msg} -> kRefusal
//   5xx / connection failure -> kTransport, read/connect timeout -> kTimeout
// Only plain http:// endpoints are supported.
class HttpTextClient {
 public:
  HttpTextClient(std::string endpoint, std::string model, std::chrono::milliseconds timeout,
                 std::string api_key = {});

  std::string complete(const std::string& prompt, const std::string& image_base64,
                       const std::string& image_url = {}) const;

 private:
  std::string base_;
  std::string path_;
  std::string model_;
  std::chrono::milliseconds timeout_;
  std::string api_key_;
};

// Reads the key from FORGE_API_KEY, empty when unset.
std::string api_key_from_env();

}  // namespace forge
