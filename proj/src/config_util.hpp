#pragma once

#include <charconv>
#include <string>

#include <fmt/format.h>

#include "tbscreen/error.hpp"
#include "tbscreen/model.hpp"

namespace tbscreen::detail {

inline const std::string& require_key(const ConfigMap& map, const std::string& key) {
  auto it = map.find(key);
  if (it == map.end()) throw ConfigError("config is missing key '" + key + "'");
  return it->second;
}

inline std::size_t get_size(const ConfigMap& map, const std::string& key) {
  const auto& text = require_key(map, key);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError("config key '" + key + "' is not a non-negative integer: '" + text + "'");
  return value;
}

inline double get_double(const ConfigMap& map, const std::string& key) {
  const auto& text = require_key(map, key);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used == text.size()) return value;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "' is not a number: '" + text + "'");
}

/// Shortest text that parses back to the same double.
inline std::string exact(double value) { return fmt::format("{}", value); }

}  // namespace tbscreen::detail
