#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "riskmm/corridor.hpp"

namespace riskmm::cli {

using Json = nlohmann::ordered_json;

Json config_to_json(const CorridorConfig& config);
CorridorConfig config_from_json(const Json& j);

CorridorConfig load_config(const std::string& path);
void save_config(const CorridorConfig& config, const std::string& path);

/// Applies `key.path=value` assignments onto the JSON form of the config.
/// Values are parsed as JSON when possible, otherwise taken as strings.
CorridorConfig apply_overrides(const CorridorConfig& config,
                               const std::vector<std::string>& assignments);

}  // namespace riskmm::cli
