#pragma once

#include <string>

#include "json.hpp"

#include "cloudtomo/core/grid.hpp"

namespace cloudtomo::io {

// Container: "CTG1" magic, u32 LE header length, header JSON, then
// nx*ny*nz little-endian float32 values, x-fastest then y then z.
void write_grid(const std::string& path, const LwcGrid& grid,
                const nlohmann::json& meta = nlohmann::json::object());

struct GridFile {
  LwcGrid grid;
  nlohmann::json meta;
};

GridFile read_grid(const std::string& path);

}  // namespace cloudtomo::io
