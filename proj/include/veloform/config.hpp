#pragma once

#include "veloform/training.hpp"

#include "json.hpp"

#include <string>

namespace veloform {

nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const FieldConfig& f);
nlohmann::json to_json(const TrainConfig& c);
LossWeights weights_from_json(const nlohmann::json& j);
FieldConfig field_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Applies one "key value" setting. Throws std::invalid_argument naming the
// key when it is unknown or the value does not parse.
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

// Flat key-value config file: one "key = value" (or "key value") per line,
// '#' comments. Later keys override earlier ones.
TrainConfig load_train_config(const std::string& path, TrainConfig base = {});

}  // namespace veloform
