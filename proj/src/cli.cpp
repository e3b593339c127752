#include "forge/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "forge/corpus.hpp"
#include "forge/dataset.hpp"
#include "forge/error.hpp"
#include "forge/evalharness.hpp"
#include "forge/inspection.hpp"
#include "forge/inspection_server.hpp"
#include "forge/lossmath.hpp"
#include "forge/promptgen.hpp"
#include "forge/stats.hpp"
#include "forge/text.hpp"
#include "forge/trainplan.hpp"
#include "forge/vocab.hpp"

namespace forge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

ForgeConfig ForgeConfig::from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "config must be a JSON object");
  static const std::set<std::string> kTop{"paths", "backend", "normalization_rules", "service_port", "seed"};
  static const std::set<std::string> kPaths{"catalog", "templates", "output_dir"};
  for (const auto& [k, v] : j.items()) {
    if (!kTop.contains(k)) throw Error(ErrorKind::kConfig, "unknown config key '" + k + "'", {{"key", k}});
  }
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return (path.is_absolute() ? path : fs::path(base_dir) / path).lexically_normal().string();
  };
  auto existing = [&](const std::string& key, const json& v) {
    auto p = resolve(v.get<std::string>());
    if (!fs::exists(p)) throw Error(ErrorKind::kConfig, "config path '" + key + "' does not exist: " + p, {{"path", p}});
    return p;
  };
  ForgeConfig c;
  try {
    if (j.contains("paths")) {
      for (const auto& [k, v] : j["paths"].items()) {
        if (!kPaths.contains(k)) throw Error(ErrorKind::kConfig, "unknown config key 'paths." + k + "'", {{"key", k}});
      }
      const auto& p = j["paths"];
      if (p.contains("catalog")) c.catalog = existing("catalog", p["catalog"]);
      if (p.contains("templates")) c.templates = existing("templates", p["templates"]);
      if (p.contains("output_dir")) c.output_dir = resolve(p["output_dir"].get<std::string>());
    }
    if (j.contains("backend")) c.backend = genclient::BackendConfig::from_json(j["backend"]);
    if (j.contains("normalization_rules")) c.normalization_rules = existing("normalization_rules", j["normalization_rules"]);
    c.service_port = j.value("service_port", 8080);
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad config value: ") + e.what());
  }
  return c;
}

ForgeConfig ForgeConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, "config '" + path + "' is not valid JSON: " + e.what(), {{"path", path}});
  }
  auto dir = fs::path(path).parent_path();
  return from_json(j, dir.empty() ? "." : dir.string());
}

namespace {

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct Options {
  std::string config_path;

  // shared io
  std::string in, in_b, out, name, parent, text_path, text_b_path;
  std::string catalog, templates, image, kind = "object", kinds = "all", backend = "mock";
  std::string languages = "en,ko,zh";
  std::string ledger;
  int min_objects = 3, max_objects = 10;

  std::string removals;
  std::string annotators, tasks, log, snapshot, preference, ballot_log, token, static_dir, host = "127.0.0.1";
  int port = -1;
  int snapshot_interval = 60;

  std::string lang = "ko", field = "answer", dict, edges = "0,10,20,30,40,50,60,70,80,90,100", tokenizer = "whitespace";
  std::size_t max_position = 5;
  bool csv = false;

  std::string base, additions, report;
  std::int64_t count = 0;
  std::optional<std::uint64_t> seed;
  double stddev = vocab::kDefaultInitStddev;

  std::string model, data;

  std::vector<std::string> sets;
  bool kv = false;
  std::string phases;
  std::optional<double> printed;

  std::string gold, pred, rules, items, judge = "longer", endpoint, judge_model = "judge", ballots, human, verdicts;
  std::string model_a = "A", model_b = "B";
  bool no_randomize = false;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto t = std::string(text::trim(part));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<Language> parse_languages(const std::string& s) {
  std::vector<Language> out;
  for (const auto& p : split_csv(s)) out.push_back(parse_language(p));
  return out;
}

std::vector<DataKind> parse_kinds(const std::string& s) {
  if (s == "all") return {kAllDataKinds.begin(), kAllDataKinds.end()};
  std::vector<DataKind> out;
  for (const auto& p : split_csv(s)) out.push_back(parse_data_kind(p));
  return out;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::istringstream in(text::read_file(path));
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception&) {
      throw Error(ErrorKind::kParse, "'" + path + "' line " + std::to_string(lineno) + " is not JSON",
                  {{"path", path}, {"line", lineno}});
    }
  }
  return out;
}

json read_json(const std::string& path) {
  try {
    return json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, "'" + path + "' is not valid JSON: " + e.what(), {{"path", path}});
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(text::read_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

class Runner {
 public:
  Runner(Options& o, std::ostream& out, std::ostream& err) : o_(o), out_(out), err_(err) {}

  void load_config() {
    if (!o_.config_path.empty()) cfg_ = ForgeConfig::load(o_.config_path);
  }

  std::uint64_t stage_seed(const std::string& label) const {
    return o_.seed ? *o_.seed : text::fork_seed(cfg_.seed, label);
  }

  // Writes to --out or prints.
  void emit(const std::string& content) {
    if (o_.out.empty()) {
      out_ << content;
    } else {
      text::write_file(o_.out, content);
    }
  }

  std::string require(const std::string& value, const std::optional<std::string>& fallback, const char* what) {
    if (!value.empty()) return value;
    if (fallback) return *fallback;
    throw Error(ErrorKind::kConfig, std::string("missing ") + what);
  }

  std::string out_dir() const {
    if (!o_.out.empty()) return o_.out;
    if (cfg_.output_dir) return *cfg_.output_dir;
    return "forge-out";
  }

  void corpus_select() {
    const auto path = require(o_.in, cfg_.catalog, "--in catalog");
    auto catalog = corpus::ingest_catalog_file(path);
    corpus::SelectionCriteria crit{o_.min_objects, o_.max_objects};
    auto selected = corpus::select_images(catalog, crit);
    std::ostringstream ss;
    corpus::write_catalog(ss, selected);
    if (o_.out.empty()) {
      out_ << ss.str();
    } else {
      text::write_file(o_.out, ss.str());
      out_ << json{{"total", catalog.size()}, {"selected", selected.size()}, {"out", o_.out}}.dump() << "\n";
    }
  }

  void prompt_render() {
    const auto cat = require(o_.catalog, cfg_.catalog, "--catalog");
    const auto dir = require(o_.templates, cfg_.templates, "--templates");
    const auto kind = parse_data_kind(o_.kind);
    auto templates = promptgen::load_template_dir(dir);
    auto it = templates.find(kind);
    if (it == templates.end()) throw Error(ErrorKind::kConfig, "no template for kind " + o_.kind);
    for (const auto& rec : corpus::ingest_catalog_file(cat)) {
      if (rec.image_id == o_.image) {
        emit(promptgen::build_prompt(rec, kind, it->second, parse_languages(o_.languages)).rendered_prompt);
        return;
      }
    }
    throw Error(ErrorKind::kNotFound, "image '" + o_.image + "' is not in " + cat, {{"image_id", o_.image}});
  }

  std::unique_ptr<genclient::Backend> make_backend(const genclient::BackendConfig& bc) {
    if (o_.backend == "mock") return std::make_unique<genclient::MockBackend>(stage_seed("generate"));
    if (o_.backend == "http") return std::make_unique<genclient::HttpBackend>(bc);
    throw Error(ErrorKind::kConfig, "backend must be mock or http, got '" + o_.backend + "'");
  }

  genclient::CampaignResult run_generation(const std::vector<corpus::ImageRecord>& images) {
    const auto dir = require(o_.templates, cfg_.templates, "--templates");
    auto templates = promptgen::load_template_dir(dir);
    auto bc = cfg_.backend;
    if (!o_.endpoint.empty()) bc.endpoint = o_.endpoint;
    auto backend = make_backend(bc);
    genclient::CampaignOptions opts;
    opts.languages = parse_languages(o_.languages);
    return genclient::run_campaign(images, parse_kinds(o_.kinds), bc, templates, *backend, opts);
  }

  static json failures_json(const genclient::CampaignResult& r) {
    json f = json::array();
    for (const auto& x : r.failures) f.push_back(x.to_json());
    return f;
  }

  void generate() {
    const auto cat = require(o_.catalog, cfg_.catalog, "--catalog");
    auto result = run_generation(corpus::ingest_catalog_file(cat));
    const auto out = o_.out.empty() ? std::string("samples.jsonl") : o_.out;
    text::write_file(out, dataset::to_jsonl(result.samples));
    auto m = dataset::compute_manifest(result.samples, o_.name.empty() ? "generated" : o_.name);
    m.seed = cfg_.seed;
    dataset::write_manifest(m, out + ".manifest.json");
    if (!o_.ledger.empty()) text::write_file(o_.ledger, result.ledger.to_json().dump(2) + "\n");
    out_ << json{{"samples", result.samples.size()},
                 {"failures", failures_json(result)},
                 {"ledger", result.ledger.to_json()}}
                .dump()
         << "\n";
  }

  void dataset_validate() {
    auto samples = dataset::import_jsonl(o_.in);
    json reports = json::array();
    std::size_t invalid = 0;
    for (const auto& s : samples) {
      auto r = dataset::validate_sample(s);
      if (!r.valid()) {
        ++invalid;
        reports.push_back(r.to_json());
      }
    }
    out_ << json{{"samples", samples.size()}, {"invalid", invalid}, {"reports", reports}}.dump(2) << "\n";
    if (invalid > 0) {
      throw Error(ErrorKind::kValidation, std::to_string(invalid) + " invalid sample(s) in " + o_.in, {{"invalid", invalid}});
    }
  }

  void dataset_export() {
    auto samples = dataset::import_jsonl(o_.in);
    if (o_.out.empty()) throw Error(ErrorKind::kConfig, "--out is required");
    auto m = dataset::export_jsonl(samples, o_.out, o_.name.empty() ? "dataset" : o_.name);
    m.seed = cfg_.seed;
    dataset::write_manifest(m, o_.out + ".manifest.json");
    out_ << dataset::to_json(m).dump() << "\n";
  }

  void dataset_subset() {
    auto samples = dataset::import_jsonl(o_.in);
    if (o_.out.empty()) throw Error(ErrorKind::kConfig, "--out is required");
    std::set<std::string> removals;
    for (const auto& line : read_lines(o_.removals)) {
      auto t = std::string(text::trim(line));
      if (!t.empty()) removals.insert(t);
    }
    auto [kept, m] = dataset::derive_subset(samples, removals, o_.name.empty() ? "subset" : o_.name,
                                            o_.parent.empty() ? std::nullopt : std::optional(o_.parent));
    m.seed = cfg_.seed;
    text::write_file(o_.out, dataset::to_jsonl(kept));
    dataset::write_manifest(m, o_.out + ".manifest.json");
    out_ << dataset::to_json(m).dump() << "\n";
  }

  static std::vector<inspection::Annotator> load_annotators(const std::string& path) {
    auto j = read_json(path);
    std::vector<inspection::Annotator> out;
    for (const auto& a : j) out.push_back(inspection::Annotator::from_json(a));
    return out;
  }

  void inspect_assign() {
    auto samples = dataset::import_jsonl(o_.in);
    auto tasks = inspection::assign_tasks(samples, load_annotators(o_.annotators));
    std::string s;
    for (const auto& t : tasks) s += t.to_json().dump() + "\n";
    emit(s);
  }

  void inspect_serve() {
    auto samples = dataset::import_jsonl(o_.in);
    auto initial = inspection::read_tasks(o_.tasks);
    const std::string log = o_.log.empty() ? o_.tasks + ".verdicts.log" : o_.log;
    const std::string snap = o_.snapshot.empty() ? o_.tasks + ".snapshot.json" : o_.snapshot;
    auto service = inspection::InspectionService::recover(std::move(samples), std::move(initial), snap, log);
    const auto cat = o_.catalog.empty() ? cfg_.catalog : std::optional(o_.catalog);
    if (cat) {
      std::map<std::string, std::string> uris;
      for (const auto& r : corpus::ingest_catalog_file(*cat)) uris[r.image_id] = r.uri;
      service.set_image_uris(std::move(uris));
    }
    std::unique_ptr<inspection::PreferenceStore> prefs;
    if (!o_.preference.empty()) {
      const std::string blog = o_.ballot_log.empty() ? o_.preference + ".ballots.log" : o_.ballot_log;
      prefs = std::make_unique<inspection::PreferenceStore>(eval::read_preference_items(o_.preference),
                                                            stage_seed("inspect.preference"), blog);
    }
    inspection::ServerOptions so;
    so.token = o_.token;
    if (so.token.empty()) {
      if (const char* t = std::getenv("FORGE_INSPECT_TOKEN")) so.token = t;
    }
    if (!o_.static_dir.empty()) so.static_dir = o_.static_dir;
    inspection::InspectionServer server(service, prefs.get(), so);
    const int port = server.start(o_.host, o_.port >= 0 ? o_.port : cfg_.service_port);
    out_ << json{{"listening", o_.host + ":" + std::to_string(port)}}.dump() << "\n" << std::flush;

    g_stop = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    auto last = std::chrono::steady_clock::now();
    std::uint64_t snap_seq = service.last_seq();
    while (!g_stop) {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      const auto now = std::chrono::steady_clock::now();
      if (now - last >= std::chrono::seconds(o_.snapshot_interval) && service.last_seq() != snap_seq) {
        service.snapshot(snap);
        snap_seq = service.last_seq();
        last = now;
      }
    }
    server.stop();
    service.snapshot(snap);
  }

  void inspect_apply_removals() {
    auto samples = dataset::import_jsonl(o_.in);
    auto tasks = inspection::read_tasks(o_.tasks);
    const std::string log = o_.log.empty() ? o_.tasks + ".verdicts.log" : o_.log;
    const std::string snap = o_.snapshot.empty() ? o_.tasks + ".snapshot.json" : o_.snapshot;
    auto service = inspection::InspectionService::recover(std::move(samples), std::move(tasks), snap, log);
    if (o_.out.empty()) throw Error(ErrorKind::kConfig, "--out is required");
    auto [kept, m] = service.apply_removals(o_.name.empty() ? "inspected" : o_.name,
                                            o_.parent.empty() ? std::optional<std::string>(o_.in) : o_.parent);
    m.seed = cfg_.seed;
    text::write_file(o_.out, dataset::to_jsonl(kept));
    dataset::write_manifest(m, o_.out + ".manifest.json");
    out_ << dataset::to_json(m).dump() << "\n";
  }

  std::vector<std::string> stats_texts(const std::string& dataset_path, const std::string& text_path) {
    if (!text_path.empty()) return read_lines(text_path);
    if (dataset_path.empty()) throw Error(ErrorKind::kConfig, "need --in dataset or --text file");
    return stats::extract_texts(dataset::import_jsonl(dataset_path), parse_language(o_.lang), stats::parse_field(o_.field));
  }

  template <typename R>
  void emit_report(const R& r) {
    emit(o_.csv ? r.to_csv() : r.to_json().dump(2) + "\n");
  }

  void stats_positional() {
    if (o_.max_position < 1) throw Error(ErrorKind::kContract, "--max-position must be at least 1");
    emit_report(stats::positional_frequency(stats_texts(o_.in, o_.text_path), o_.max_position));
  }

  void stats_lengths() { emit_report(stats::length_distribution(stats_texts(o_.in, o_.text_path))); }

  void stats_pos() {
    std::string dict = o_.dict;
#ifdef FORGE_DEFAULT_DICTIONARY
    if (dict.empty()) dict = FORGE_DEFAULT_DICTIONARY;
#endif
    auto analyzer = dict.empty() ? stats::DictionaryAnalyzer() : stats::DictionaryAnalyzer::from_tsv(dict);
    emit_report(stats::pos_report(stats_texts(o_.in, o_.text_path), analyzer));
  }

  void stats_tokhist() {
    std::vector<double> edges;
    for (const auto& e : split_csv(o_.edges)) {
      try {
        edges.push_back(std::stod(e));
      } catch (const std::exception&) {
        throw Error(ErrorKind::kContract, "bad bin edge '" + e + "'");
      }
    }
    stats::TokenCounter tok;
    if (o_.tokenizer == "whitespace") {
      tok = stats::whitespace_token_count;
    } else if (o_.tokenizer == "codepoint") {
      tok = stats::codepoint_token_count;
    } else {
      throw Error(ErrorKind::kConfig, "tokenizer must be whitespace or codepoint");
    }
    auto a = stats_texts(o_.in, o_.text_path);
    auto b = stats_texts(o_.in_b, o_.text_b_path);
    emit_report(stats::token_length_histogram(a, b, tok, edges));
  }

  void vocab_merge() {
    auto base = vocab::read_vocab(o_.base);
    auto [merged, rep] = vocab::merge_vocab(base, vocab::read_token_list(o_.additions));
    if (o_.out.empty()) throw Error(ErrorKind::kConfig, "--out is required");
    vocab::write_vocab(merged, o_.out);
    auto j = rep.to_json();
    if (!o_.report.empty()) text::write_file(o_.report, j.dump(2) + "\n");
    out_ << json{{"base_size", rep.base_size}, {"final_size", rep.final_size}, {"added_effective", rep.added_effective}}.dump()
         << "\n";
  }

  void vocab_extend() {
    auto table = vocab::read_embeddings(o_.in);
    const auto seed = stage_seed("vocab.extend-emb");
    auto ext = vocab::extend_embeddings(table, o_.count, seed, o_.stddev);
    const auto out = o_.out.empty() ? o_.in + ".extended" : o_.out;
    vocab::write_embeddings(ext, out);
    out_ << json{{"rows", ext.rows}, {"dim", ext.dim}, {"added", o_.count}, {"seed", seed}, {"stddev", o_.stddev}, {"out", out}}.dump()
         << "\n";
  }

  void loss(bool vit) {
    auto model = lossmath::model_from_json(read_json(o_.model));
    auto data = read_json(o_.data);
    double value = 0.0;
    json per;
    if (vit) {
      auto samples = lossmath::samples_from_json(data);
      value = lossmath::vit_loss(*model, samples);
      per = lossmath::sample_losses(*model, samples);
    } else {
      auto corpus = lossmath::corpus_from_json(data);
      value = lossmath::pretrain_loss(*model, corpus);
      per = lossmath::sequence_losses(*model, corpus);
    }
    emit(json{{"objective", vit ? "vit" : "pretrain"}, {"loss", value}, {"per_item", per}}.dump(2) + "\n");
  }

  void trainplan_emit() {
    json overrides = json::object();
    for (const auto& s : o_.sets) trainplan::apply_override_arg(overrides, s);
    auto cfg = trainplan::emit_config(overrides);
    emit(o_.kv ? trainplan::to_key_value(cfg) : trainplan::to_canonical_json(cfg));
  }

  void trainplan_durations() {
    std::vector<trainplan::PhaseDuration> phases;
    std::optional<double> printed = o_.printed;
    if (o_.phases.empty()) {
      phases = trainplan::reference_phases();
      if (!printed) printed = trainplan::kReferencePrintedTotalHours;
    } else {
      for (const auto& p : read_json(o_.phases)) {
        phases.push_back({p.at("phase").get<std::string>(), p.at("hours").get<double>()});
      }
    }
    emit(trainplan::sum_durations(phases, printed).to_json().dump(2) + "\n");
  }

  eval::NormalizationRules rules() {
    std::string path = o_.rules;
    if (path.empty() && cfg_.normalization_rules) path = *cfg_.normalization_rules;
    if (path.empty()) return eval::NormalizationRules::defaults();
    auto r = eval::NormalizationRules::from_json(read_json(path));
    r.validate();
    return r;
  }

  void eval_score() {
    auto items = eval::join_predictions(o_.gold, o_.pred);
    emit(eval::score_accuracy(items, rules()).to_json(items).dump(2) + "\n");
  }

  void eval_judge() {
    auto items = eval::read_preference_items(o_.items);
    std::unique_ptr<eval::Judge> judge;
    if (o_.judge == "longer") {
      judge = std::make_unique<eval::LongerAnswerJudge>();
    } else if (o_.judge == "longer-freetext") {
      judge = std::make_unique<eval::LongerAnswerJudge>(eval::LongerAnswerJudge::Style::kFreeText);
    } else if (o_.judge == "http") {
      auto ep = o_.endpoint.empty() ? cfg_.backend.endpoint : o_.endpoint;
      judge = std::make_unique<eval::HttpJudge>(ep, o_.judge_model, cfg_.backend.timeout);
    } else {
      throw Error(ErrorKind::kConfig, "judge must be longer, longer-freetext or http");
    }
    eval::JudgeOptions opts;
    opts.seed = stage_seed("eval.judge");
    opts.randomize_positions = !o_.no_randomize;
    auto run = eval::judge_all(items, *judge, opts);
    std::string s;
    for (const auto& v : run.verdicts) s += v.to_json().dump() + "\n";
    emit(s);
    json failures = json::array();
    for (const auto& f : run.failures) failures.push_back({{"item_id", f.item_id}, {"message", f.message}});
    if (!o_.out.empty()) out_ << json{{"verdicts", run.verdicts.size()}, {"failures", failures}, {"seed", opts.seed}}.dump() << "\n";
    if (!run.failures.empty()) {
      throw Error(ErrorKind::kTransport, std::to_string(run.failures.size()) + " item(s) could not be judged",
                  {{"failures", failures}});
    }
  }

  void eval_aggregate() {
    std::string s;
    for (const auto& j : read_jsonl(o_.ballots)) s += eval::aggregate_human(eval::HumanBallots::from_json(j)).to_json().dump() + "\n";
    emit(s);
  }

  void eval_agreement() {
    std::vector<eval::JudgeVerdict> judge;
    for (const auto& j : read_jsonl(o_.verdicts)) judge.push_back(eval::JudgeVerdict::from_json(j));
    std::vector<eval::AggregatedVerdict> human;
    for (const auto& j : read_jsonl(o_.human)) human.push_back(eval::AggregatedVerdict::from_json(j));
    emit(eval::agreement(judge, human).to_json().dump(2) + "\n");
  }

  void eval_summary() {
    std::vector<eval::Outcome> outcomes;
    for (const auto& j : read_jsonl(o_.verdicts)) {
      try {
        outcomes.push_back(eval::parse_outcome(j.at("outcome").get<std::string>()));
      } catch (const json::exception&) {
        throw Error(ErrorKind::kParse, "verdict record lacks an outcome", {{"path", o_.verdicts}});
      }
    }
    emit(eval::preference_summary(outcomes).to_json(o_.model_a, o_.model_b).dump(2) + "\n");
  }

  void campaign() {
    const auto cat = require(o_.catalog, cfg_.catalog, "--catalog");
    const auto dir = fs::path(out_dir());
    fs::create_directories(dir / "stats");
    auto catalog = corpus::ingest_catalog_file(cat);
    auto selected = corpus::select_images(catalog, {o_.min_objects, o_.max_objects});
    {
      std::ostringstream ss;
      corpus::write_catalog(ss, selected);
      text::write_file((dir / "selected.jsonl").string(), ss.str());
    }
    auto result = run_generation(selected);
    // invalid generations never reach parse success, but re-check before export
    auto m = dataset::export_jsonl(result.samples, (dir / "samples.jsonl").string(), o_.name.empty() ? "campaign" : o_.name);
    m.seed = cfg_.seed;
    dataset::write_manifest(m, (dir / "samples.jsonl.manifest.json").string());
    text::write_file((dir / "ledger.json").string(), result.ledger.to_json().dump(2) + "\n");
    text::write_file((dir / "failures.json").string(), failures_json(result).dump(2) + "\n");
    if (!o_.annotators.empty()) {
      auto tasks = inspection::assign_tasks(result.samples, load_annotators(o_.annotators));
      inspection::write_tasks(tasks, (dir / "tasks.jsonl").string());
    }
    for (auto lang : parse_languages(o_.languages)) {
      for (auto [fname, field] : {std::pair{"question", stats::Field::kQuestion}, std::pair{"answer", stats::Field::kAnswer}}) {
        auto texts = stats::extract_texts(result.samples, lang, field);
        auto base = std::string(to_string(lang)) + "_" + fname;
        text::write_file((dir / "stats" / (base + "_lengths.json")).string(),
                         stats::length_distribution(texts).to_json().dump(2) + "\n");
        text::write_file((dir / "stats" / (base + "_positional.json")).string(),
                         stats::positional_frequency(texts, 5).to_json().dump(2) + "\n");
      }
    }
    out_ << json{{"catalog", catalog.size()},
                 {"selected", selected.size()},
                 {"samples", result.samples.size()},
                 {"failures", result.failures.size()},
                 {"total_cost_micros", result.ledger.total_cost.micros()},
                 {"out_dir", dir.string()}}
                .dump()
         << "\n";
  }

 private:
  Options& o_;
  std::ostream& out_;
  std::ostream& err_;
  ForgeConfig cfg_;
};

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  Runner runner(o, out, err);
  std::function<void()> action;

  CLI::App app{"Multilingual visual-instruction dataset factory and evaluation harness", "forge"};
  app.require_subcommand(1);
  app.add_option("--config", o.config_path, "Shared JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Override the seed of the current stage");

  auto set = [&](CLI::App* sub, std::function<void()> f) {
    sub->callback([&action, f] { action = f; });
  };

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Catalog ingestion and image selection")->require_subcommand(1);
  auto* sel = corpus_cmd->add_subcommand("select", "Keep images whose main-object count is within bounds");
  sel->add_option("--in", o.in, "Catalog JSONL");
  sel->add_option("--out", o.out, "Selected catalog JSONL (stdout if omitted)");
  sel->add_option("--min", o.min_objects, "Minimum object count")->capture_default_str();
  sel->add_option("--max", o.max_objects, "Maximum object count")->capture_default_str();
  set(sel, [&] { runner.corpus_select(); });

  // prompt
  auto* prompt_cmd = app.add_subcommand("prompt", "Generation prompts")->require_subcommand(1);
  auto* render = prompt_cmd->add_subcommand("render", "Render the prompt for one image and kind");
  render->add_option("--catalog", o.catalog, "Catalog JSONL");
  render->add_option("--image", o.image, "Image id")->required();
  render->add_option("--kind", o.kind, "object|location|atmosphere|conversation")->capture_default_str();
  render->add_option("--templates", o.templates, "Template directory");
  render->add_option("--languages", o.languages, "Comma-separated languages")->capture_default_str();
  render->add_option("--out", o.out, "Output file (stdout if omitted)");
  set(render, [&] { runner.prompt_render(); });

  // generate
  auto* gen = app.add_subcommand("generate", "Generate samples for every image x kind");
  gen->add_option("--catalog", o.catalog, "Selected catalog JSONL");
  gen->add_option("--templates", o.templates, "Template directory");
  gen->add_option("--kinds", o.kinds, "Comma-separated kinds or 'all'")->capture_default_str();
  gen->add_option("--backend", o.backend, "mock|http")->capture_default_str();
  gen->add_option("--endpoint", o.endpoint, "HTTP backend endpoint (overrides config)");
  gen->add_option("--languages", o.languages, "Comma-separated languages")->capture_default_str();
  gen->add_option("--out", o.out, "Samples JSONL")->capture_default_str();
  gen->add_option("--ledger", o.ledger, "Cost ledger JSON");
  gen->add_option("--name", o.name, "Dataset name for the manifest");
  set(gen, [&] { runner.generate(); });

  // dataset
  auto* ds = app.add_subcommand("dataset", "Dataset validation, export and subsets")->require_subcommand(1);
  auto* validate = ds->add_subcommand("validate", "Validate every sample; exit 1 if any is invalid");
  validate->add_option("--in", o.in, "Samples JSONL")->required();
  set(validate, [&] { runner.dataset_validate(); });
  auto* exp = ds->add_subcommand("export", "Write canonical JSONL plus manifest sidecar");
  exp->add_option("--in", o.in, "Samples JSONL")->required();
  exp->add_option("--out", o.out, "Output JSONL")->required();
  exp->add_option("--name", o.name, "Dataset name");
  set(exp, [&] { runner.dataset_export(); });
  auto* sub = ds->add_subcommand("subset", "Drop listed sample ids");
  sub->add_option("--in", o.in, "Samples JSONL")->required();
  sub->add_option("--remove", o.removals, "File with one sample id per line")->required();
  sub->add_option("--out", o.out, "Output JSONL")->required();
  sub->add_option("--name", o.name, "Subset name");
  sub->add_option("--parent", o.parent, "Parent manifest name");
  set(sub, [&] { runner.dataset_subset(); });

  // inspect
  auto* insp = app.add_subcommand("inspect", "Annotator review workflow")->require_subcommand(1);
  auto* assign = insp->add_subcommand("assign", "Create review tasks round-robin per language pair");
  assign->add_option("--in", o.in, "Samples JSONL")->required();
  assign->add_option("--annotators", o.annotators, "JSON array of {id, capabilities}")->required();
  assign->add_option("--out", o.out, "Tasks JSONL (stdout if omitted)");
  set(assign, [&] { runner.inspect_assign(); });
  auto* serve = insp->add_subcommand("serve", "Serve the review and ballot HTTP API");
  serve->add_option("--in", o.in, "Samples JSONL")->required();
  serve->add_option("--tasks", o.tasks, "Tasks JSONL")->required();
  serve->add_option("--log", o.log, "Verdict log (default <tasks>.verdicts.log)");
  serve->add_option("--snapshot", o.snapshot, "Snapshot file (default <tasks>.snapshot.json)");
  serve->add_option("--snapshot-interval", o.snapshot_interval, "Seconds between snapshots")->capture_default_str();
  serve->add_option("--catalog", o.catalog, "Catalog used to resolve image URIs");
  serve->add_option("--preference", o.preference, "Preference items JSONL for human ballots");
  serve->add_option("--ballot-log", o.ballot_log, "Ballot log (default <preference>.ballots.log)");
  serve->add_option("--token", o.token, "Bearer token (or FORGE_INSPECT_TOKEN)");
  serve->add_option("--static", o.static_dir, "Directory served at /ui");
  serve->add_option("--host", o.host, "Bind address")->capture_default_str();
  serve->add_option("--port", o.port, "Port (config service_port if omitted, 0 = any)");
  set(serve, [&] { runner.inspect_serve(); });
  auto* rem = insp->add_subcommand("apply-removals", "Drop samples with any Error verdict");
  rem->add_option("--in", o.in, "Samples JSONL")->required();
  rem->add_option("--tasks", o.tasks, "Tasks JSONL")->required();
  rem->add_option("--log", o.log, "Verdict log (default <tasks>.verdicts.log)");
  rem->add_option("--snapshot", o.snapshot, "Snapshot file (default <tasks>.snapshot.json)");
  rem->add_option("--out", o.out, "Output JSONL")->required();
  rem->add_option("--name", o.name, "Output dataset name");
  rem->add_option("--parent", o.parent, "Parent manifest name (default: input path)");
  set(rem, [&] { runner.inspect_apply_removals(); });

  // stats
  auto* st = app.add_subcommand("stats", "Dataset and response statistics")->require_subcommand(1);
  auto add_text_opts = [&](CLI::App* c) {
    c->add_option("--in", o.in, "Samples JSONL");
    c->add_option("--text", o.text_path, "Plain text file, one text per line (instead of --in)");
    c->add_option("--lang", o.lang, "Language of the texts")->capture_default_str();
    c->add_option("--field", o.field, "question|answer")->capture_default_str();
    c->add_option("--out", o.out, "Output file (stdout if omitted)");
    c->add_flag("--csv", o.csv, "CSV instead of JSON");
  };
  auto* pos_cmd = st->add_subcommand("positional", "Word frequency by position");
  add_text_opts(pos_cmd);
  pos_cmd->add_option("--max-position", o.max_position, "Positions to track")->capture_default_str();
  set(pos_cmd, [&] { runner.stats_positional(); });
  auto* len_cmd = st->add_subcommand("lengths", "Word length distribution");
  add_text_opts(len_cmd);
  set(len_cmd, [&] { runner.stats_lengths(); });
  auto* postag = st->add_subcommand("pos", "Part-of-speech duplicate/unique counts");
  add_text_opts(postag);
  postag->add_option("--dict", o.dict, "Morpheme dictionary TSV");
  set(postag, [&] { runner.stats_pos(); });
  auto* tok = st->add_subcommand("tokhist", "Paired token-length histograms");
  add_text_opts(tok);
  tok->add_option("--in-b", o.in_b, "Second samples JSONL");
  tok->add_option("--text-b", o.text_b_path, "Second plain text file");
  tok->add_option("--edges", o.edges, "Comma-separated bin edges")->capture_default_str();
  tok->add_option("--tokenizer", o.tokenizer, "whitespace|codepoint")->capture_default_str();
  set(tok, [&] { runner.stats_tokhist(); });

  // vocab
  auto* vc = app.add_subcommand("vocab", "Vocabulary expansion")->require_subcommand(1);
  auto* merge = vc->add_subcommand("merge", "Append new tokens to a base vocabulary");
  merge->add_option("--base", o.base, "Base vocabulary, one token per line")->required();
  merge->add_option("--add", o.additions, "Tokens to add, one per line")->required();
  merge->add_option("--out", o.out, "Merged vocabulary")->required();
  merge->add_option("--report", o.report, "Expansion report JSON");
  set(merge, [&] { runner.vocab_merge(); });
  auto* ext = vc->add_subcommand("extend-emb", "Append randomly initialized embedding rows");
  ext->add_option("--in", o.in, "Embedding table (binary)")->required();
  ext->add_option("--count", o.count, "Rows to add")->required();
  ext->add_option("--stddev", o.stddev, "Init standard deviation")->capture_default_str();
  ext->add_option("--out", o.out, "Output table (default <in>.extended)");
  set(ext, [&] { runner.vocab_extend(); });

  // loss
  auto* ls = app.add_subcommand("loss", "Reference training objectives on toy models")->require_subcommand(1);
  for (bool vit : {false, true}) {
    auto* c = ls->add_subcommand(vit ? "vit" : "pretrain",
                                 vit ? "Masked multi-turn answer loss" : "Next-token loss over a corpus");
    c->add_option("--model", o.model, "Model JSON")->required();
    c->add_option("--data", o.data, "Data JSON")->required();
    c->add_option("--out", o.out, "Output file (stdout if omitted)");
    set(c, [&, vit] { runner.loss(vit); });
  }

  // trainplan
  auto* tp = app.add_subcommand("trainplan", "Fine-tuning configuration and compute ledger")->require_subcommand(1);
  auto* emit = tp->add_subcommand("emit", "Emit the training configuration");
  emit->add_option("--set", o.sets, "Override key=value (repeatable)");
  emit->add_flag("--kv", o.kv, "Flat key=value output");
  emit->add_option("--out", o.out, "Output file (stdout if omitted)");
  set(emit, [&] { runner.trainplan_emit(); });
  auto* dur = tp->add_subcommand("durations", "Sum per-phase GPU hours");
  dur->add_option("--phases", o.phases, "JSON array of {phase, hours} (reference table if omitted)");
  dur->add_option("--printed", o.printed, "Printed total to check against");
  dur->add_option("--out", o.out, "Output file (stdout if omitted)");
  set(dur, [&] { runner.trainplan_durations(); });

  // eval
  auto* ev = app.add_subcommand("eval", "Accuracy scoring and preference evaluation")->require_subcommand(1);
  auto* score = ev->add_subcommand("score", "Normalized exact-match accuracy");
  score->add_option("--gold", o.gold, "Gold JSONL")->required();
  score->add_option("--pred", o.pred, "Predictions JSONL")->required();
  score->add_option("--rules", o.rules, "Normalization rules JSON");
  score->add_option("--out", o.out, "Output file (stdout if omitted)");
  set(score, [&] { runner.eval_score(); });
  auto* judge = ev->add_subcommand("judge", "Pairwise judging with position randomization");
  judge->add_option("--items", o.items, "Preference items JSONL")->required();
  judge->add_option("--judge", o.judge, "longer|longer-freetext|http")->capture_default_str();
  judge->add_option("--endpoint", o.endpoint, "Judge endpoint for http");
  judge->add_option("--model", o.judge_model, "Judge model name for http")->capture_default_str();
  judge->add_flag("--no-randomize", o.no_randomize, "Keep A/B in item order");
  judge->add_option("--out", o.out, "Verdicts JSONL (stdout if omitted)");
  set(judge, [&] { runner.eval_judge(); });
  auto* agg = ev->add_subcommand("aggregate", "Aggregate three human ballots per item");
  agg->add_option("--ballots", o.ballots, "JSONL of {item_id, votes}")->required();
  agg->add_option("--out", o.out, "Output JSONL (stdout if omitted)");
  set(agg, [&] { runner.eval_aggregate(); });
  auto* agr = ev->add_subcommand("agreement", "Judge versus human cross-tabulation");
  agr->add_option("--judge", o.verdicts, "Judge verdicts JSONL")->required();
  agr->add_option("--human", o.human, "Aggregated human verdicts JSONL")->required();
  agr->add_option("--out", o.out, "Output file (stdout if omitted)");
  set(agr, [&] { runner.eval_agreement(); });
  auto* summ = ev->add_subcommand("summary", "Win/tie/loss percentages");
  summ->add_option("--verdicts", o.verdicts, "Verdicts JSONL (judge or aggregated)")->required();
  summ->add_option("--model-a", o.model_a, "Name of model A")->capture_default_str();
  summ->add_option("--model-b", o.model_b, "Name of model B")->capture_default_str();
  summ->add_option("--out", o.out, "Output file (stdout if omitted)");
  set(summ, [&] { runner.eval_summary(); });

  // campaign
  auto* camp = app.add_subcommand("campaign", "select -> generate -> validate -> export -> tasks -> stats");
  camp->add_option("--catalog", o.catalog, "Catalog JSONL");
  camp->add_option("--templates", o.templates, "Template directory");
  camp->add_option("--kinds", o.kinds, "Comma-separated kinds or 'all'")->capture_default_str();
  camp->add_option("--backend", o.backend, "mock|http")->capture_default_str();
  camp->add_option("--endpoint", o.endpoint, "HTTP backend endpoint");
  camp->add_option("--languages", o.languages, "Comma-separated languages")->capture_default_str();
  camp->add_option("--min", o.min_objects, "Minimum object count")->capture_default_str();
  camp->add_option("--max", o.max_objects, "Maximum object count")->capture_default_str();
  camp->add_option("--annotators", o.annotators, "Annotators JSON; writes tasks.jsonl");
  camp->add_option("--name", o.name, "Dataset name");
  camp->add_option("--out", o.out, "Output directory (config output_dir if omitted)");
  set(camp, [&] { runner.campaign(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    runner.load_config();
    if (action) action();
    return kExitOk;
  } catch (const forge::Error& e) {
    err << json{{"error", e.to_json()}}.dump() << "\n";
  } catch (const std::exception& e) {
    err << json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << "\n";
  }
  return kExitRuntime;
}

}  // namespace forge::cli
