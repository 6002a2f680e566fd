#pragma once

#include <json.hpp>

#include "revsci/network.hpp"

// JSON <-> config object helpers shared by the checkpoint and training code.
namespace revsci::detail {

nlohmann::json network_config_to_obj(const NetworkConfig& config);
NetworkConfig network_config_from_obj(const nlohmann::json& j);

} // namespace revsci::detail
