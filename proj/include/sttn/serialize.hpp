#pragma once
// JSON forms of configs, parameters, metrics and fold reports. Doubles are
// written with round-trip precision so a saved model reloads bit-exactly.

#include <string>

#include "json.hpp"

#include "sttn/layers.hpp"
#include "sttn/train.hpp"

namespace sttn {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const ModelConfig& config);
// Accepts tcl_dims entries either as [P1,P2,P3] or as one integer (cubic).
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& config);
// Missing fields keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// {"format_version", "config", "parameters": [...flat, for_each_block order]}
nlohmann::json to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

void save_model(const std::string& path, const ModelParams& params, const nlohmann::json& meta = {});
ModelParams load_model(const std::string& path);

nlohmann::json to_json(const Metrics& metrics);
std::string confusion_csv(const ConfusionMatrix& confusion);

nlohmann::json to_json(const FoldResult& fold);
nlohmann::json to_json(const FoldReport& report);

}  // namespace sttn
