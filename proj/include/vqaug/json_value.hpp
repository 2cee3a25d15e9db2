#pragma once

#include <stdexcept>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

namespace vqaug {

/// j[key] converted to T, or fallback when absent. Unsigned targets reject
/// negative and fractional numbers instead of wrapping them.
template <typename T>
T json_value(const nlohmann::json& j, const char* key, const T& fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!v.is_number_unsigned()) {
      throw std::invalid_argument(std::string(key) + " must be a non-negative integer, got " +
                                  v.dump());
    }
  }
  return v.get<T>();
}

}  // namespace vqaug
