#pragma once

#include <string>

#include "json.hpp"

#include "cloudtomo/core/geometry.hpp"

namespace cloudtomo::io {

// Schema: { "cameras": [ { "K": [9 row-major], "R": [9 row-major],
//                          "t": [3], "width": int, "height": int } ] }
Rig rig_from_json(const nlohmann::json& j);
nlohmann::json rig_to_json(const Rig& rig);

Rig read_rig(const std::string& path);
void write_rig(const std::string& path, const Rig& rig);

}  // namespace cloudtomo::io
