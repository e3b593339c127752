#include "forge/genclient.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <thread>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::genclient {

using nlohmann::json;
using std::chrono::milliseconds;

// ---- BackendConfig ---------------------------------------------------------

void BackendConfig::validate() const {
  if (max_retries < 0) throw Error(ErrorKind::kConfig, "max_retries must be >= 0");
  if (parallelism_limit < 1) throw Error(ErrorKind::kConfig, "parallelism_limit must be >= 1");
  if (timeout.count() <= 0) throw Error(ErrorKind::kConfig, "timeout must be positive");
  if (cost_per_call.micros() < 0) throw Error(ErrorKind::kConfig, "cost_per_call must be >= 0");
  if (backoff_multiplier < 1.0) throw Error(ErrorKind::kConfig, "backoff_multiplier must be >= 1");
}

BackendConfig BackendConfig::from_json(const json& j) {
  BackendConfig c;
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model_name = j.value("model_name", c.model_name);
    c.timeout = milliseconds(j.value("timeout_ms", c.timeout.count()));
    c.max_retries = j.value("max_retries", c.max_retries);
    if (j.contains("cost_per_call_micros")) {
      c.cost_per_call = Money::from_micros(j["cost_per_call_micros"].get<std::int64_t>());
    } else if (j.contains("cost_per_call")) {
      c.cost_per_call = Money::from_dollars(j["cost_per_call"].get<double>());
    }
    c.parallelism_limit = j.value("parallelism_limit", c.parallelism_limit);
    c.backoff_initial = milliseconds(j.value("backoff_initial_ms", c.backoff_initial.count()));
    c.backoff_multiplier = j.value("backoff_multiplier", c.backoff_multiplier);
    c.backoff_max = milliseconds(j.value("backoff_max_ms", c.backoff_max.count()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad backend config: ") + e.what());
  }
  c.validate();
  return c;
}

json BackendConfig::to_json() const {
  return {{"endpoint", endpoint},
          {"model_name", model_name},
          {"timeout_ms", timeout.count()},
          {"max_retries", max_retries},
          {"cost_per_call_micros", cost_per_call.micros()},
          {"parallelism_limit", parallelism_limit},
          {"backoff_initial_ms", backoff_initial.count()},
          {"backoff_multiplier", backoff_multiplier},
          {"backoff_max_ms", backoff_max.count()}};
}

// ---- HttpBackend -----------------------------------------------------------

HttpBackend::HttpBackend(const BackendConfig& config, std::string api_key)
    : config_(config), api_key_(std::move(api_key)) {
  config_.validate();
}

std::string HttpBackend::complete(const promptgen::GenerationRequest& request, milliseconds timeout) {
  const std::string& uri = request.image.uri;
  std::string image_b64, image_url;
  if (uri.starts_with("http://") || uri.starts_with("https://")) {
    image_url = uri;
  } else if (!uri.empty()) {
    if (!std::filesystem::exists(uri)) {
      throw Error(ErrorKind::kPrecondition, "image file '" + uri + "' does not exist");
    }
    image_b64 = text::base64_encode(text::read_file(uri));
  }
  HttpTextClient client(config_.endpoint, config_.model_name, timeout, api_key_);
  return client.complete(request.rendered_prompt, image_b64, image_url);
}

// ---- MockBackend -----------------------------------------------------------

namespace {

struct Phrasing {
  const char* question;
  const char* answer;
};

// {0} = first object, {1} = second object
Phrasing phrasing(DataKind kind, Language lang, std::size_t variant) {
  static const Phrasing kObject[3][2] = {
      {{"What can you tell me about the {0}?", "The {0} is clearly visible in the image, close to the {1}."},
       {"What color is the {0}?", "The {0} has a muted color that stands out against the {1}."}},
      {{"{0}에 대해 무엇을 알 수 있나요?", "{0}이(가) 이미지에서 {1} 가까이에 잘 보입니다."},
       {"{0}은(는) 무슨 색인가요?", "{0}은(는) {1}와(과) 대비되는 차분한 색입니다."}},
      {{"关于{0}你能告诉我什么？", "图片中{0}清晰可见，靠近{1}。"},
       {"{0}是什么颜色的？", "{0}的颜色比较柔和，与{1}形成对比。"}}};
  static const Phrasing kLocation[3][2] = {
      {{"Where is the {0} located?", "The {0} is located to the left of the {1}."},
       {"What is next to the {0}?", "The {1} is right next to the {0}."}},
      {{"{0}은(는) 어디에 있나요?", "{0}은(는) {1}의 왼쪽에 있습니다."},
       {"{0} 옆에는 무엇이 있나요?", "{0} 바로 옆에 {1}이(가) 있습니다."}},
      {{"{0}在哪里？", "{0}位于{1}的左边。"}, {"{0}旁边有什么？", "{0}旁边是{1}。"}}};
  static const Phrasing kAtmosphere[3][2] = {
      {{"What is the mood of the scene with the {0}?", "The scene feels calm and relaxed, with the {0} and the {1} in soft light."},
       {"What time of day does it seem to be?", "It seems to be daytime; the {0} and the {1} are brightly lit."}},
      {{"{0}이(가) 있는 장면의 분위기는 어떤가요?", "{0}과(와) {1}이(가) 부드러운 빛 속에 있어 차분하고 편안한 분위기입니다."},
       {"지금은 하루 중 언제쯤인 것 같나요?", "{0}과(와) {1}이(가) 밝게 비춰져 낮 시간으로 보입니다."}},
      {{"有{0}的场景氛围如何？", "{0}和{1}沐浴在柔和的光线中，气氛平静而轻松。"},
       {"现在看起来是一天中的什么时候？", "{0}和{1}被照得很亮，看起来是白天。"}}};
  static const Phrasing kConversation[3][2] = {
      {{"Can you describe the {0}?", "Sure. The {0} is in the middle of the image, near the {1}."},
       {"How does the {0} relate to the {1}?", "The {0} is placed beside the {1}, and both are easy to see."}},
      {{"{0}을(를) 설명해 줄 수 있나요?", "네. {0}은(는) 이미지 가운데, {1} 근처에 있습니다."},
       {"{0}과(와) {1}은(는) 어떤 관계인가요?", "{0}은(는) {1} 옆에 놓여 있고 둘 다 잘 보입니다."}},
      {{"你能描述一下{0}吗？", "当然。{0}在图片中间，靠近{1}。"},
       {"{0}和{1}是什么关系？", "{0}放在{1}旁边，两者都很容易看到。"}}};
  const Phrasing(*table)[2] = kObject;
  switch (kind) {
    case DataKind::kObjectCentric: table = kObject; break;
    case DataKind::kLocationCentric: table = kLocation; break;
    case DataKind::kAtmosphereCentric: table = kAtmosphere; break;
    case DataKind::kConversation: table = kConversation; break;
  }
  return table[static_cast<int>(lang)][variant % 2];
}

std::string fill(std::string s, const std::string& a, const std::string& b) {
  for (auto [key, val] : {std::pair<std::string, const std::string*>{"{0}", &a}, {"{1}", &b}}) {
    std::size_t pos = 0;
    while ((pos = s.find(key, pos)) != std::string::npos) {
      s.replace(pos, key.size(), *val);
      pos += val->size();
    }
  }
  return s;
}

class InFlightGuard {
 public:
  InFlightGuard(std::atomic<int>& cur, std::atomic<int>& max) : cur_(cur) {
    int now = ++cur_;
    int prev = max.load();
    while (now > prev && !max.compare_exchange_weak(prev, now)) {
    }
  }
  ~InFlightGuard() { --cur_; }

 private:
  std::atomic<int>& cur_;
};

}  // namespace

MockBackend::MockBackend(std::uint64_t seed, milliseconds latency) : seed_(seed), latency_(latency) {}

void MockBackend::set_fault(const std::string& request_id, Fault fault) {
  std::lock_guard lock(mu_);
  faults_[request_id] = fault;
}

void MockBackend::set_fixture(const std::string& request_id, std::string text) {
  std::lock_guard lock(mu_);
  fixtures_[request_id] = std::move(text);
}

std::string MockBackend::render(const promptgen::GenerationRequest& request,
                                std::optional<int> turns_override,
                                std::optional<Language> drop) const {
  const auto& objects = request.image.object_names;
  if (objects.empty()) throw Error(ErrorKind::kPrecondition, "mock backend needs main objects");
  std::uint64_t h = text::fork_seed(seed_, request.request_id());
  const int turns = turns_override.value_or(dataset::expected_turns(request.kind));

  std::ostringstream os;
  os << "Here is the generated data.\n\n";
  if (request.kind == DataKind::kLocationCentric) {
    os << "```graph\n";
    for (std::size_t i = 0; i + 1 < objects.size(); ++i) {
      os << objects[i] << " | next to | " << objects[i + 1] << "\n";
    }
    if (objects.size() == 1) os << objects[0] << " | in | scene\n";
    os << "```\n\n";
  }
  for (int t = 1; t <= turns; ++t) {
    std::uint64_t th = text::mix64(h + static_cast<std::uint64_t>(t));
    const std::string& a = objects[th % objects.size()];
    const std::string& b = objects[(th / 7 + 1) % objects.size()];
    std::size_t variant = (th >> 17) & 1;
    for (Language l : request.languages) {
      if (drop && *drop == l) continue;
      Phrasing p = phrasing(request.kind, l, variant);
      os << "```qa lang=" << to_string(l) << " turn=" << t << "\n";
      os << "Q: " << fill(p.question, a, b) << "\n";
      os << "A: " << fill(p.answer, a, b) << "\n";
      os << "```\n";
    }
  }
  return os.str();
}

std::string MockBackend::complete(const promptgen::GenerationRequest& request, milliseconds timeout) {
  InFlightGuard guard(in_flight_, max_in_flight_);
  ++total_calls_;
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

  const std::string id = request.request_id();
  Fault fault;
  int attempt = 0;
  std::optional<std::string> fixture;
  {
    std::lock_guard lock(mu_);
    if (auto it = faults_.find(id); it != faults_.end()) fault = it->second;
    attempt = ++attempts_[id];
    if (auto it = fixtures_.find(id); it != fixtures_.end()) fixture = it->second;
  }
  if (attempt <= fault.transport_failures) {
    throw Error(ErrorKind::kTransport, "mock transport failure (attempt " + std::to_string(attempt) + ")");
  }
  if (attempt <= fault.transport_failures + fault.timeouts) {
    throw Error(ErrorKind::kTimeout, "mock timeout after " + std::to_string(timeout.count()) + " ms");
  }
  if (fault.refuse) {
    throw Error(ErrorKind::kRefusal, "mock refusal: content policy",
                {{"backend_message", "I can't help with that image."}});
  }
  if (fixture) return *fixture;
  std::string out = render(request, fault.turns, fault.drop_language);
  if (fault.malformed) out += "```qa lang=en turn=1\nQ: dangling\n";
  return out;
}

// ---- generate --------------------------------------------------------------

RawGeneration generate(const promptgen::GenerationRequest& request, const BackendConfig& config,
                       Backend& backend) {
  config.validate();
  if (request.rendered_prompt.empty()) {
    throw Error(ErrorKind::kPrecondition, "request '" + request.request_id() + "' was not rendered");
  }
  const auto start = std::chrono::steady_clock::now();
  milliseconds backoff = config.backoff_initial;
  int attempts = 0;
  for (;;) {
    ++attempts;
    try {
      RawGeneration raw;
      raw.raw_text = backend.complete(request, config.timeout);
      raw.request_id = request.request_id();
      raw.image_id = request.image.image_id;
      raw.attempts = attempts;
      raw.cost = config.cost_per_call * attempts;
      raw.model_name = config.model_name;
      raw.template_hash = request.template_hash;
      raw.latency = std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now() - start);
      return raw;
    } catch (const Error& e) {
      const bool retryable = e.kind() == ErrorKind::kTransport || e.kind() == ErrorKind::kTimeout;
      json detail = e.detail().is_object() ? e.detail() : json::object();
      detail["attempts"] = attempts;
      detail["billed_micros"] = (config.cost_per_call * attempts).micros();
      detail["request_id"] = request.request_id();
      if (!retryable) throw Error(e.kind(), e.what(), std::move(detail));
      if (attempts > config.max_retries) {
        throw Error(e.kind(),
                    "gave up on '" + request.request_id() + "' after " + std::to_string(attempts) +
                        " attempts: " + e.what(),
                    std::move(detail));
      }
    }
    if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
    auto next = static_cast<long long>(std::llround(static_cast<double>(backoff.count()) *
                                                    config.backoff_multiplier));
    backoff = std::min(milliseconds(next), config.backoff_max);
  }
}

// ---- parse_generation ------------------------------------------------------

namespace {

struct Block {
  Language lang;
  int turn;
  std::string question;
  std::string answer;
  std::size_t offset;
};

[[noreturn]] void parse_fail(const std::string& why, std::size_t offset) {
  throw Error(ErrorKind::kParse, why + " at byte " + std::to_string(offset), {{"byte_offset", offset}});
}

Block parse_header(std::string_view header, std::size_t offset) {
  // header: "qa lang=en turn=1"
  auto words = text::split_words(header);
  if (words.empty() || words[0] != "qa") parse_fail("bad block header", offset);
  std::optional<Language> lang;
  std::optional<int> turn;
  for (std::size_t i = 1; i < words.size(); ++i) {
    auto eq = words[i].find('=');
    if (eq == std::string_view::npos) parse_fail("bad block attribute '" + std::string(words[i]) + "'", offset);
    auto key = words[i].substr(0, eq);
    auto val = std::string(words[i].substr(eq + 1));
    if (key == "lang") {
      try {
        lang = parse_language(val);
      } catch (const Error&) {
        parse_fail("unknown language tag '" + val + "'", offset);
      }
    } else if (key == "turn") {
      try {
        std::size_t used = 0;
        int n = std::stoi(val, &used);
        if (used != val.size() || n < 1) throw std::invalid_argument(val);
        turn = n;
      } catch (const std::exception&) {
        parse_fail("bad turn number '" + val + "'", offset);
      }
    } else {
      parse_fail("unknown block attribute '" + std::string(key) + "'", offset);
    }
  }
  if (!lang || !turn) parse_fail("block header needs lang= and turn=", offset);
  return Block{*lang, *turn, {}, {}, offset};
}

void parse_body(Block& b, const std::vector<std::pair<std::string, std::size_t>>& lines) {
  enum { kNone, kQ, kA } field = kNone;
  bool have_q = false, have_a = false;
  for (const auto& [raw_line, off] : lines) {
    auto line = text::trim(raw_line);
    if (line.starts_with("Q:")) {
      if (have_q) parse_fail("second Q: in block", off);
      b.question = std::string(text::trim(line.substr(2)));
      field = kQ;
      have_q = true;
    } else if (line.starts_with("A:")) {
      if (!have_q) parse_fail("A: before Q:", off);
      if (have_a) parse_fail("second A: in block", off);
      b.answer = std::string(text::trim(line.substr(2)));
      field = kA;
      have_a = true;
    } else if (field == kQ) {
      if (!line.empty()) b.question += "\n" + std::string(line);
    } else if (field == kA) {
      if (!line.empty()) b.answer += "\n" + std::string(line);
    } else if (!line.empty()) {
      parse_fail("text before Q: in block", off);
    }
  }
  if (!have_q || !have_a) parse_fail("block lacks Q: or A:", b.offset);
}

std::vector<Block> scan_blocks(const std::string& s) {
  std::vector<Block> blocks;
  std::size_t pos = 0;
  bool in_fence = false;
  bool in_qa = false;
  std::size_t fence_offset = 0;
  Block current{};
  std::vector<std::pair<std::string, std::size_t>> body;
  while (pos < s.size()) {
    std::size_t eol = s.find('\n', pos);
    if (eol == std::string::npos) eol = s.size();
    std::string_view line(s.data() + pos, eol - pos);
    auto t = text::trim(line);
    if (!in_fence) {
      if (t.starts_with("```")) {
        in_fence = true;
        fence_offset = pos;
        auto header = text::trim(t.substr(3));
        in_qa = header.starts_with("qa") && (header.size() == 2 || header[2] == ' ' || header[2] == '\t');
        if (in_qa) {
          current = parse_header(header, pos);
          body.clear();
        }
      }
    } else if (t == "```") {
      in_fence = false;
      if (in_qa) {
        parse_body(current, body);
        blocks.push_back(std::move(current));
      }
    } else if (in_qa) {
      body.emplace_back(std::string(line), pos);
    }
    pos = eol + 1;
  }
  if (in_fence) parse_fail("unterminated fenced block opened", fence_offset);
  return blocks;
}

}  // namespace

dataset::Sample parse_generation(const RawGeneration& raw, DataKind kind,
                                 const std::vector<Language>& languages) {
  if (text::trim(raw.raw_text).empty()) {
    throw Error(ErrorKind::kPrecondition, "empty generation for '" + raw.request_id + "'");
  }
  if (languages.empty()) throw Error(ErrorKind::kPrecondition, "language list is empty");
  std::vector<Block> blocks = scan_blocks(raw.raw_text);
  if (blocks.empty()) throw Error(ErrorKind::kParse, "no ```qa blocks found", {{"byte_offset", 0}});

  std::set<Language> wanted(languages.begin(), languages.end());
  std::map<int, std::map<Language, dataset::QAPair>> by_turn;
  for (auto& b : blocks) {
    if (!wanted.contains(b.lang)) {
      throw Error(ErrorKind::kSchema, "unexpected language block '" + std::string(to_string(b.lang)) + "'",
                  {{"language", to_string(b.lang)}, {"turn", b.turn}});
    }
    auto& slot = by_turn[b.turn];
    if (slot.contains(b.lang)) {
      throw Error(ErrorKind::kSchema,
                  "duplicate " + std::string(to_string(b.lang)) + " block for turn " + std::to_string(b.turn),
                  {{"language", to_string(b.lang)}, {"turn", b.turn}});
    }
    slot[b.lang] = dataset::QAPair{b.lang, std::move(b.question), std::move(b.answer)};
  }

  const int want = dataset::expected_turns(kind);
  const int have = static_cast<int>(by_turn.size());
  if (have != want || by_turn.rbegin()->first != want) {
    throw Error(ErrorKind::kSchema,
                "expected " + std::to_string(want) + (want == 1 ? " turn" : " turns") + ", got " +
                    std::to_string(have) + " (turns must be numbered 1.." + std::to_string(want) + ")",
                {{"expected_turns", want}, {"turns", have}});
  }
  for (const auto& [turn, pairs] : by_turn) {
    for (Language l : languages) {
      if (!pairs.contains(l)) {
        throw Error(ErrorKind::kSchema,
                    "missing " + std::string(to_string(l)) + " block in turn " + std::to_string(turn),
                    {{"language", to_string(l)}, {"turn", turn}});
      }
    }
  }

  dataset::Sample s;
  s.sample_id = raw.request_id;
  s.image_id = raw.image_id;
  s.kind = kind;
  s.languages = languages;
  for (auto& [turn, pairs] : by_turn) s.turns.push_back(dataset::Turn{turn, std::move(pairs)});
  s.provenance = {raw.template_hash, raw.model_name, raw.timestamp};

  auto report = dataset::validate_sample(s);
  if (!report.valid()) {
    throw Error(ErrorKind::kSchema, report.violations.front().message, report.to_json());
  }
  return s;
}

// ---- ledger ----------------------------------------------------------------

void CostLedger::bill(DataKind kind, int attempts, bool call_succeeded, Money cost_per_call) {
  Money c = cost_per_call * attempts;
  calls += attempts;
  successful_calls += call_succeeded ? 1 : 0;
  failed_attempts += attempts - (call_succeeded ? 1 : 0);
  total_cost += c;
  per_kind[kind] += c;
}

bool CostLedger::conserved() const {
  Money sum;
  for (const auto& [k, v] : per_kind) sum += v;
  return sum == total_cost && calls == successful_calls + failed_attempts;
}

json CostLedger::to_json() const {
  json pk = json::object();
  for (DataKind k : kAllDataKinds) {
    auto it = per_kind.find(k);
    pk[std::string(to_string(k))] = it == per_kind.end() ? 0 : it->second.micros();
  }
  return {{"calls", calls},
          {"successful_calls", successful_calls},
          {"failed_attempts", failed_attempts},
          {"total_cost_micros", total_cost.micros()},
          {"per_kind_micros", std::move(pk)}};
}

double cost_per_datapoint(Money total, std::size_t datapoints) {
  if (datapoints == 0) throw Error(ErrorKind::kContract, "cost per datapoint needs at least one datapoint");
  return total.dollars() / static_cast<double>(datapoints);
}

json Failure::to_json() const {
  return {{"request_id", request_id},
          {"image_id", image_id},
          {"kind", to_string(kind)},
          {"error", to_string(error)},
          {"message", message},
          {"attempts", attempts}};
}

// ---- run_campaign ----------------------------------------------------------

CampaignResult run_campaign(const std::vector<corpus::ImageRecord>& images,
                            const std::vector<DataKind>& kinds, const BackendConfig& config,
                            const std::map<DataKind, promptgen::PromptTemplate>& templates,
                            Backend& backend, const CampaignOptions& options) {
  config.validate();
  for (DataKind k : kinds) {
    if (!templates.contains(k)) {
      throw Error(ErrorKind::kConfig, "no template for kind '" + std::string(to_string(k)) + "'");
    }
  }

  struct Slot {
    std::optional<dataset::Sample> sample;
    std::optional<Failure> failure;
  };
  const std::size_t n = images.size() * kinds.size();
  std::vector<Slot> slots(n);
  CampaignResult result;
  std::mutex ledger_mu;
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto& image = images[i / kinds.size()];
      const DataKind kind = kinds[i % kinds.size()];
      Failure f;
      f.image_id = image.image_id;
      f.kind = kind;
      f.request_id = image.image_id + "#" + std::string(to_string(kind));
      int billed = 0;
      bool call_ok = false;
      try {
        auto request = promptgen::build_prompt(image, kind, templates.at(kind), options.languages);
        RawGeneration raw = generate(request, config, backend);
        billed = raw.attempts;
        call_ok = true;
        raw.timestamp = options.run_timestamp;
        slots[i].sample = parse_generation(raw, kind, options.languages);
      } catch (const Error& e) {
        if (!call_ok && e.detail().contains("attempts")) billed = e.detail()["attempts"].get<int>();
        f.error = e.kind();
        f.message = e.what();
        f.attempts = billed;
        slots[i].failure = std::move(f);
      }
      if (billed > 0) {
        std::lock_guard lock(ledger_mu);
        result.ledger.bill(kind, billed, call_ok, config.cost_per_call);
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.parallelism_limit), n);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  for (auto& slot : slots) {
    if (slot.sample) result.samples.push_back(std::move(*slot.sample));
    if (slot.failure) result.failures.push_back(std::move(*slot.failure));
  }
  return result;
}

}  // namespace forge::genclient
