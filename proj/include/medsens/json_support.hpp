#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

#include "medsens/datamodel.hpp"

namespace medsens {

/// Parses JSON text. Syntax errors become ConfigError carrying
/// "source:line:column".
nlohmann::json parse_json_text(std::string_view text, const std::string& source);
nlohmann::json read_json_file(const std::string& path);

/// Accepts "full", "main_effects" or an object
/// {"preset": ..., "exposure": {...}, "mediator": {...}, "outcome": {...}}
/// whose block flags override the preset (default "main_effects").
/// `where` is a JSON pointer used in error messages.
ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json model_spec_to_json(const ModelSpec& spec);

/// Checked member access; errors name `where`/`key`.
const nlohmann::json& require_member(const nlohmann::json& obj, const std::string& key, const std::string& where);
double json_number(const nlohmann::json& j, const std::string& where);
std::string json_string(const nlohmann::json& j, const std::string& where);
bool json_bool(const nlohmann::json& j, const std::string& where);

}  // namespace medsens
