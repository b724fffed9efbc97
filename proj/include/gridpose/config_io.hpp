#pragma once

#include <json.hpp>

#include "gridpose/gln.hpp"

namespace gridpose {

nlohmann::json gln_config_to_json(const GLNConfig& c);
GLNConfig gln_config_from_json(const nlohmann::json& j);

nlohmann::json topology_to_json(const SkeletonTopology& t);
SkeletonTopology topology_from_json(const nlohmann::json& j);

}  // namespace gridpose
