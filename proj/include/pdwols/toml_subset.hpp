#pragma once

#include <json.hpp>

#include <string>

namespace pdwols {

// Reads the TOML subset used by config files: comments, [tables],
// key = string | integer | float | boolean | array of scalars.
nlohmann::ordered_json parse_toml_subset(const std::string& text, const std::string& origin);
nlohmann::ordered_json load_toml_file(const std::string& path);

}  // namespace pdwols
