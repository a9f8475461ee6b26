#pragma once

// JSON forms of configurations and reports. Parsing starts from the defaults
// and overrides the keys present; unknown keys are rejected.

#include <string>

#include <nlohmann/json.hpp>

#include "klcbl/metrics.hpp"
#include "klcbl/model.hpp"

namespace klcbl {

void to_json(nlohmann::json& j, const ConvConfig& c);
void from_json(const nlohmann::json& j, ConvConfig& c);
void to_json(nlohmann::json& j, const LstmConfig& c);
void from_json(const nlohmann::json& j, LstmConfig& c);
void to_json(nlohmann::json& j, const SplineGrid& g);
void from_json(const nlohmann::json& j, SplineGrid& g);
void to_json(nlohmann::json& j, const HeadConfig& c);
void from_json(const nlohmann::json& j, HeadConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const FusionSlot& s);
void to_json(nlohmann::json& j, const ConfusionMatrix& cm);
void to_json(nlohmann::json& j, const MetricsReport& r);

/// Hex FNV-1a of the compact dump; stable because nlohmann objects keep
/// their keys sorted.
std::string json_hash(const nlohmann::json& j);

}  // namespace klcbl
