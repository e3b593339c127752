#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "forge/dataset.hpp"
#include "forge/error.hpp"
#include "forge/http_text_client.hpp"
#include "forge/promptgen.hpp"
#include "forge/types.hpp"
#include "json.hpp"

namespace forge::genclient {

struct BackendConfig {
  std::string endpoint;
  std::string model_name = "mock-vlm";
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  Money cost_per_call;
  int parallelism_limit = 4;
  std::chrono::milliseconds backoff_initial{250};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds backoff_max{8000};

  void validate() const;
  static BackendConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct RawGeneration {
  std::string request_id;
  std::string image_id;
  std::string raw_text;
  std::chrono::milliseconds latency{0};
  Money cost;  // billed attempts x cost_per_call
  int attempts = 0;
  std::string model_name;
  std::string template_hash;
  std::string timestamp;
};

// A vision-LLM endpoint. Implementations signal failures with forge::Error:
// kTransport / kTimeout are retried, kRefusal is final.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const promptgen::GenerationRequest& request,
                               std::chrono::milliseconds timeout) = 0;
};

class HttpBackend final : public Backend {
 public:
  HttpBackend(const BackendConfig& config, std::string api_key = api_key_from_env());
  std::string complete(const promptgen::GenerationRequest& request,
                       std::chrono::milliseconds timeout) override;

 private:
  BackendConfig config_;
  std::string api_key_;
};

// Deterministic stand-in for a vision-LLM: the response for a request is a
// pure function of (seed, request_id, languages). Faults can be injected per
// request id, and in-flight concurrency is instrumented.
class MockBackend final : public Backend {
 public:
  struct Fault {
    int transport_failures = 0;  // fail this many times, then succeed
    int timeouts = 0;
    bool refuse = false;
    std::optional<int> turns;  // emit this many turns instead of the kind's count
    std::optional<Language> drop_language;
    bool malformed = false;  // unterminated fence
  };

  explicit MockBackend(std::uint64_t seed = 0, std::chrono::milliseconds latency = {});

  void set_fault(const std::string& request_id, Fault fault);
  void set_fixture(const std::string& request_id, std::string text);

  std::string complete(const promptgen::GenerationRequest& request,
                       std::chrono::milliseconds timeout) override;

  // Well-formed response for the request, ignoring faults.
  std::string render(const promptgen::GenerationRequest& request,
                     std::optional<int> turns_override = std::nullopt,
                     std::optional<Language> drop = std::nullopt) const;

  int max_in_flight() const { return max_in_flight_.load(); }
  long total_calls() const { return total_calls_.load(); }

 private:
  std::uint64_t seed_;
  std::chrono::milliseconds latency_;
  std::mutex mu_;
  std::map<std::string, Fault> faults_;
  std::map<std::string, int> attempts_;
  std::map<std::string, std::string> fixtures_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<long> total_calls_{0};
};

// Sends the request, retrying kTransport/kTimeout up to max_retries times with
// exponential backoff. Every attempt is billed. Failures rethrow with
// detail {"attempts", "billed_micros"}.
RawGeneration generate(const promptgen::GenerationRequest& request, const BackendConfig& config,
                       Backend& backend);

// Parses ```qa lang=<code> turn=<n> blocks into a schema-valid Sample.
dataset::Sample parse_generation(const RawGeneration& raw, DataKind kind,
                                 const std::vector<Language>& languages);

struct CostLedger {
  std::int64_t calls = 0;
  std::int64_t successful_calls = 0;
  std::int64_t failed_attempts = 0;
  Money total_cost;
  std::map<DataKind, Money> per_kind;

  void bill(DataKind kind, int attempts, bool call_succeeded, Money cost_per_call);
  bool conserved() const;
  nlohmann::json to_json() const;
};

double cost_per_datapoint(Money total, std::size_t datapoints);

struct Failure {
  std::string request_id;
  std::string image_id;
  DataKind kind = DataKind::kObjectCentric;
  ErrorKind error = ErrorKind::kTransport;
  std::string message;
  int attempts = 0;

  nlohmann::json to_json() const;
};

struct CampaignOptions {
  std::vector<Language> languages{Language::kEn, Language::kKo, Language::kZh};
  std::string run_timestamp;
};

struct CampaignResult {
  std::vector<dataset::Sample> samples;  // input order, (image, kind) major-minor
  CostLedger ledger;
  std::vector<Failure> failures;
};

// Attempts every (image, kind) pair with at most config.parallelism_limit
// requests in flight. Per-pair failures are collected, never fatal.
CampaignResult run_campaign(const std::vector<corpus::ImageRecord>& images,
                            const std::vector<DataKind>& kinds, const BackendConfig& config,
                            const std::map<DataKind, promptgen::PromptTemplate>& templates,
                            Backend& backend, const CampaignOptions& options = {});

}  // namespace forge::genclient
