#pragma once

#include <json.hpp>

namespace packlab::cli {

// Published reference values (data/reference_values.json, embedded at build
// time so the binary is self-contained).
const nlohmann::json& reference_values();

} // namespace packlab::cli
