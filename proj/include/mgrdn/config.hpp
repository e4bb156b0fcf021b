#pragma once

#include <string>

#include "json.hpp"
#include "mgrdn/trainer.hpp"

namespace mgr {

using Json = nlohmann::ordered_json;

Json to_json(const NetConfig& c);
Json to_json(const MaskScheme& m);
Json to_json(const NoiseSpec& n);
Json to_json(const TrainConfig& c);

/// Strict overlays: every key must be known, every value well typed. Keys
/// that are absent keep the value already in `out`.
void overlay(const Json& j, NetConfig& out);
void overlay(const Json& j, MaskScheme& out);
void overlay(const Json& j, NoiseSpec& out);
void overlay(const Json& j, TrainConfig& out);

/// Builds a config from JSON: "scheme" (if present) selects the defaults,
/// then the remaining keys are overlaid. The result is validated.
TrainConfig train_config_from_json(const Json& j, bool full_scale = false);
TrainConfig load_train_config(const std::string& path, bool full_scale = false);

}  // namespace mgr
