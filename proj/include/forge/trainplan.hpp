#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace forge::trainplan {

struct TrainConfig {
  double dropout = 0.05;
  double learning_rate = 5e-5;
  std::string optimizer = "AdamW";
  double beta1 = 0.9;
  double beta2 = 0.99;
  int epochs_vqa = 1;
  int batch_size = 8;
  int lora_rank = 8;
  int lora_alpha = 32;
  std::vector<std::string> lora_trainable{"q_proj", "v_proj", "k_proj", "o_proj",
                                          "gate_proj", "down_proj", "up_proj"};
  std::vector<std::string> lora_layers{"q", "k", "v"};
  int random_seed = 42;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::vector<std::string> field_names();

// Defaults with `overrides` applied. Unknown keys throw kConfig with a
// "did you mean" suggestion in the message and detail.
TrainConfig emit_config(const nlohmann::json& overrides = nlohmann::json::object());

// Canonical JSON (sorted keys, no whitespace) and flat key=value forms.
std::string to_canonical_json(const TrainConfig& c);
std::string to_key_value(const TrainConfig& c);
TrainConfig parse_config(const std::string& canonical_json);

// "key=value" command-line override; value parsed as JSON, else taken as a string.
void apply_override_arg(nlohmann::json& overrides, const std::string& arg);

struct PhaseDuration {
  std::string phase;
  double hours = 0.0;
};

struct DurationSummary {
  std::vector<PhaseDuration> phases;
  double total_hours = 0.0;
  double total_days = 0.0;
  std::optional<double> printed_total;
  bool printed_total_consistent = true;

  nlohmann::json to_json() const;
};

// Compensated sum of the phase hours; if printed_total is given it is checked
// against the sum (tolerance 0.05 h, half the table's printing precision).
DurationSummary sum_durations(const std::vector<PhaseDuration>& phases,
                              std::optional<double> printed_total = std::nullopt);

// The published per-phase GPU hours and the printed total beneath them.
std::vector<PhaseDuration> reference_phases();
inline constexpr double kReferencePrintedTotalHours = 182.1;

}  // namespace forge::trainplan
