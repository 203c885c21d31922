#pragma once

#include <string>

#include "json.hpp"

#include "flk/warp.hpp"

namespace flk {

/// {"kind": "affine" | "translation", "p": [p1, ..., p6]}
nlohmann::json warp_to_json(const AffineWarp& w);
AffineWarp warp_from_json(const nlohmann::json& j);

}  // namespace flk
