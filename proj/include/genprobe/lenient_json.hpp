#pragma once

#include <optional>
#include <string_view>

#include <json.hpp>

namespace genprobe {

// Extracts the first {...} object from free-form model output. Accepts the
// prompt's own answer style: single-quoted strings and trailing commas.
std::optional<nlohmann::json> parse_model_json(std::string_view text);

}  // namespace genprobe
