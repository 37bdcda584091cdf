#pragma once

#include <json.hpp>

#include "looptune/loopnest.hpp"

namespace looptune {

using Json = nlohmann::ordered_json;

/// Loop nests as JSON: parameters, loops, arrays, refs. Affine forms are
/// written as strings ("it1 + 32") and parsed back with AffineExpr::parse.
Json to_json(const LoopNest& nest);
LoopNest loopnest_from_json(const Json& j);

const char* to_string(AccessKind kind) noexcept;
AccessKind access_kind_from_string(const std::string& s);

} // namespace looptune
