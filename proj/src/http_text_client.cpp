#include "forge/http_text_client.hpp"

#include <cstdlib>

#include "forge/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace forge {

HttpTextClient::HttpTextClient(std::string endpoint, std::string model,
                               std::chrono::milliseconds timeout, std::string api_key)
    : model_(std::move(model)), timeout_(timeout), api_key_(std::move(api_key)) {
  const std::string scheme = "http://";
  if (!endpoint.starts_with(scheme)) {
    throw Error(ErrorKind::kConfig, "endpoint must be an http:// URL: '" + endpoint + "'");
  }
  auto slash = endpoint.find('/', scheme.size());
  if (slash == std::string::npos) {
    base_ = endpoint;
    path_ = "/";
  } else {
    base_ = endpoint.substr(0, slash);
    path_ = endpoint.substr(slash);
  }
  if (base_.size() == scheme.size()) throw Error(ErrorKind::kConfig, "endpoint has no host: '" + endpoint + "'");
}

std::string HttpTextClient::complete(const std::string& prompt, const std::string& image_base64,
                                     const std::string& image_url) const {
  httplib::Client cli(base_);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  nlohmann::json body = {{"model", model_}, {"prompt", prompt}, {"image", image_base64}};
  if (!image_url.empty()) body["image_url"] = image_url;

  auto res = cli.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      throw Error(ErrorKind::kTimeout, "backend timed out: " + httplib::to_string(err));
    }
    throw Error(ErrorKind::kTransport, "backend transport failure: " + httplib::to_string(err));
  }
  if (res->status >= 500) {
    throw Error(ErrorKind::kTransport, "backend returned HTTP " + std::to_string(res->status),
                {{"status", res->status}});
  }
  nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (res->status >= 400) {
    std::string msg = res->body;
    if (reply.is_object()) {
      if (reply.contains("refusal") && reply["refusal"].is_string()) msg = reply["refusal"];
      else if (reply.contains("error") && reply["error"].is_string()) msg = reply["error"];
    }
    throw Error(ErrorKind::kRefusal, "backend refused: " + msg,
                {{"status", res->status}, {"backend_message", msg}});
  }
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
    throw Error(ErrorKind::kFormat, "backend reply lacks a string 'text' field",
                {{"raw_reply", res->body}});
  }
  return reply["text"].get<std::string>();
}

std::string api_key_from_env() {
  const char* v = std::getenv("FORGE_API_KEY");
  return v ? std::string(v) : std::string();
}

}  // namespace forge
