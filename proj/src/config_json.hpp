#pragma once

// Helpers shared by the estimator config parsers. Not installed.

#include <set>
#include <span>
#include <string>

#include "cde/csv.hpp"
#include "cde/errors.hpp"
#include "json.hpp"

namespace cde::detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(std::string(what) + " config: unknown key '" + key + "'");
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline std::string describe_x(std::span<const double> x, const char* label = "x") {
  std::string s = std::string(label) + " = (";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + format_double(x[i]);
  return s + ")";
}

}  // namespace cde::detail
