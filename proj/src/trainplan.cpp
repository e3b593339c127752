#include "forge/trainplan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "forge/error.hpp"
#include "forge/lossmath.hpp"
#include "forge/text.hpp"

namespace forge::trainplan {

using nlohmann::json;

namespace {

json to_json(const TrainConfig& c) {
  return {{"dropout", c.dropout},
          {"learning_rate", c.learning_rate},
          {"optimizer", c.optimizer},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epochs_vqa", c.epochs_vqa},
          {"batch_size", c.batch_size},
          {"lora_rank", c.lora_rank},
          {"lora_alpha", c.lora_alpha},
          {"lora_trainable", c.lora_trainable},
          {"lora_layers", c.lora_layers},
          {"random_seed", c.random_seed}};
}

const std::map<std::string, std::string>& aliases() {
  static const std::map<std::string, std::string> k = {
      {"lr", "learning_rate"},     {"learning-rate", "learning_rate"}, {"bs", "batch_size"},
      {"batch", "batch_size"},     {"seed", "random_seed"},            {"epochs", "epochs_vqa"},
      {"epoch", "epochs_vqa"},     {"r", "lora_rank"},                 {"lora_r", "lora_rank"},
      {"rank", "lora_rank"},       {"alpha", "lora_alpha"},            {"ora_alpha", "lora_alpha"},
      {"b1", "beta1"},             {"b2", "beta2"},                    {"optim", "optimizer"},
      {"target_modules", "lora_trainable"}};
  return k;
}

std::string suggest(const std::string& key) {
  if (auto it = aliases().find(key); it != aliases().end()) return it->second;
  std::string best;
  std::size_t best_d = SIZE_MAX;
  for (const auto& f : field_names()) {
    std::size_t d = text::levenshtein(key, f);
    if (d < best_d) {
      best_d = d;
      best = f;
    }
  }
  return best;
}

template <typename T>
void assign(T& field, const json& v, const std::string& key) {
  try {
    field = v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kConfig, "override '" + key + "' has the wrong type: " + v.dump(), {{"key", key}});
  }
}

}  // namespace

std::vector<std::string> field_names() {
  std::vector<std::string> out;
  const auto j = to_json(TrainConfig{});
  for (const auto& [k, _] : j.items()) out.push_back(k);
  return out;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0) || !std::isfinite(v)) throw Error(ErrorKind::kConfig, std::string(name) + " must be positive");
  };
  positive(dropout, "dropout");
  positive(learning_rate, "learning_rate");
  positive(beta1, "beta1");
  positive(beta2, "beta2");
  positive(epochs_vqa, "epochs_vqa");
  positive(batch_size, "batch_size");
  positive(lora_rank, "lora_rank");
  positive(lora_alpha, "lora_alpha");
  positive(random_seed, "random_seed");
  if (dropout >= 1) throw Error(ErrorKind::kConfig, "dropout must be < 1");
  if (beta1 >= 1 || beta2 >= 1) throw Error(ErrorKind::kConfig, "betas must be < 1");
  if (optimizer.empty()) throw Error(ErrorKind::kConfig, "optimizer must be named");
  if (lora_trainable.empty() || lora_layers.empty()) throw Error(ErrorKind::kConfig, "LoRA module lists must be non-empty");
}

TrainConfig emit_config(const json& overrides) {
  if (!overrides.is_object()) throw Error(ErrorKind::kConfig, "overrides must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : overrides.items()) {
    if (key == "dropout") assign(c.dropout, v, key);
    else if (key == "learning_rate") assign(c.learning_rate, v, key);
    else if (key == "optimizer") assign(c.optimizer, v, key);
    else if (key == "beta1") assign(c.beta1, v, key);
    else if (key == "beta2") assign(c.beta2, v, key);
    else if (key == "epochs_vqa") assign(c.epochs_vqa, v, key);
    else if (key == "batch_size") assign(c.batch_size, v, key);
    else if (key == "lora_rank") assign(c.lora_rank, v, key);
    else if (key == "lora_alpha") assign(c.lora_alpha, v, key);
    else if (key == "lora_trainable") assign(c.lora_trainable, v, key);
    else if (key == "lora_layers") assign(c.lora_layers, v, key);
    else if (key == "random_seed") assign(c.random_seed, v, key);
    else {
      std::string s = suggest(key);
      throw Error(ErrorKind::kConfig, "unknown config key '" + key + "'; did you mean '" + s + "'?",
                  {{"key", key}, {"suggestion", s}});
    }
  }
  c.validate();
  return c;
}

std::string to_canonical_json(const TrainConfig& c) { return to_json(c).dump(); }

std::string to_key_value(const TrainConfig& c) {
  std::string out;
  const auto j = to_json(c);
  for (const auto& [k, v] : j.items()) {
    std::string val;
    if (v.is_string()) {
      val = v.get<std::string>();
    } else if (v.is_array()) {
      std::vector<std::string> parts;
      for (const auto& x : v) parts.push_back(x.get<std::string>());
      val = text::join(parts, ",");
    } else {
      val = v.dump();
    }
    out += k + "=" + val + "\n";
  }
  return out;
}

TrainConfig parse_config(const std::string& canonical_json) {
  json j;
  try {
    j = json::parse(canonical_json);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad train config: ") + e.what());
  }
  for (const auto& f : field_names()) {
    if (!j.contains(f)) throw Error(ErrorKind::kParse, "train config lacks '" + f + "'");
  }
  return emit_config(j);
}

void apply_override_arg(json& overrides, const std::string& arg) {
  auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::kConfig, "override must look like key=value, got '" + arg + "'");
  }
  std::string key = arg.substr(0, eq), raw = arg.substr(eq + 1);
  json v = json::parse(raw, nullptr, false);
  overrides[key] = v.is_discarded() ? json(raw) : v;
}

json DurationSummary::to_json() const {
  json p = json::array();
  for (const auto& ph : phases) p.push_back({{"phase", ph.phase}, {"hours", ph.hours}});
  json j = {{"phases", std::move(p)},
            {"total_hours", std::round(total_hours * 1e6) / 1e6},
            {"total_days", std::round(total_days * 1e6) / 1e6},
            {"printed_total", nullptr},
            {"printed_total_consistent", printed_total_consistent}};
  if (printed_total) j["printed_total"] = *printed_total;
  return j;
}

DurationSummary sum_durations(const std::vector<PhaseDuration>& phases, std::optional<double> printed_total) {
  DurationSummary s;
  lossmath::CompensatedSum sum;
  for (const auto& p : phases) {
    if (!(p.hours >= 0) || !std::isfinite(p.hours)) {
      throw Error(ErrorKind::kRange, "phase '" + p.phase + "' has negative or non-finite hours", {{"phase", p.phase}});
    }
    sum.add(p.hours);
  }
  s.phases = phases;
  s.total_hours = sum.value();
  s.total_days = s.total_hours / 24.0;
  s.printed_total = printed_total;
  if (printed_total) s.printed_total_consistent = std::fabs(*printed_total - s.total_hours) < 0.05;
  return s;
}

std::vector<PhaseDuration> reference_phases() {
  return {{"CC3M", 96.6}, {"Wiki-Pretraining(ko)", 28.4}, {"VIF", 64.1}};
}

}  // namespace forge::trainplan
